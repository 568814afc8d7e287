"""Multi-environment observational data: containers, CSV ingestion, scrambling."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BinaryViolation,
    DimensionMismatch,
    FewerThanTwoEnvironments,
    MissingColumn,
    NonNumericCell,
    NotOrthogonal,
)


class CovariateRole(enum.Enum):
    CONFOUNDER = "confounder"
    PARENT_OF_Y_ONLY = "parent_of_y_only"
    ANCESTOR_OF_T_ONLY = "ancestor_of_t_only"
    COLLIDER = "collider"
    DESCENDANT = "descendant"
    MEDIATOR = "mediator"
    NOISE = "noise"
    # Sentinel after linear mixing: per-column labels are meaningless.
    MIXED = "mixed"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GroundTruth:
    """Hidden per-unit truth attached to generated data.

    ite holds the unit-level effect tau_i. propensity, when known, is the
    treatment probability per unit and must lie strictly inside (0, 1).
    """

    ite: np.ndarray
    roles: tuple[CovariateRole, ...]
    propensity: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "ite", _readonly(self.ite))
        if self.ite.ndim != 1:
            raise DimensionMismatch("ite must be a vector")
        if self.propensity is not None:
            p = _readonly(self.propensity)
            if p.shape != self.ite.shape:
                raise DimensionMismatch("propensity length must match ite")
            if not np.all((p > 0.0) & (p < 1.0)):
                raise ValueError("propensity entries must lie strictly in (0, 1)")
            object.__setattr__(self, "propensity", p)
        object.__setattr__(self, "roles", tuple(self.roles))


@dataclass(frozen=True)
class EnvData:
    """One environment's sample: covariates x, binary treatment t, outcome y."""

    env_id: str
    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    truth: Optional[GroundTruth] = None
    meta: Optional[dict] = None

    def __post_init__(self):
        x = _readonly(self.x)
        t = _readonly(self.t)
        y = _readonly(self.y)
        if x.ndim != 2:
            raise DimensionMismatch("x must be an n x d matrix")
        n = x.shape[0]
        if n < 1:
            raise ValueError("environment must have at least one row")
        if t.shape != (n,) or y.shape != (n,):
            raise DimensionMismatch("x, t, y must share the row count")
        if not np.all((t == 0.0) | (t == 1.0)):
            raise BinaryViolation(f"treatment column of env {self.env_id!r} is not 0/1")
        if self.truth is not None and self.truth.ite.shape != (n,):
            raise DimensionMismatch("truth.ite length must equal the row count")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class MultiEnvDataset:
    """Ordered environments sharing one covariate schema."""

    envs: tuple[EnvData, ...]
    meta: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        envs = tuple(self.envs)
        if len(envs) < 2:
            raise FewerThanTwoEnvironments("need at least 2 environments")
        d = envs[0].d
        if any(e.d != d for e in envs):
            raise DimensionMismatch("environments disagree on covariate dimension")
        object.__setattr__(self, "envs", envs)

    @property
    def d(self) -> int:
        return self.envs[0].d

    def drop_columns(self, cols: Sequence[int]) -> "MultiEnvDataset":
        """Dataset with the given covariate columns removed (truth roles follow)."""
        keep = [j for j in range(self.d) if j not in set(cols)]
        new_envs = []
        for e in self.envs:
            truth = e.truth
            if truth is not None:
                truth = GroundTruth(
                    ite=truth.ite,
                    roles=tuple(truth.roles[j] for j in keep),
                    propensity=truth.propensity,
                )
            new_envs.append(EnvData(e.env_id, e.x[:, keep], e.t, e.y, truth, e.meta))
        return MultiEnvDataset(tuple(new_envs), meta=self.meta)


def load_multi_env_csv(
    path, treatment_col: str, outcome_col: str, env_col: str
) -> MultiEnvDataset:
    """Load a comma-separated file with header row into one EnvData per env value.

    All columns other than the named treatment/outcome/env columns become
    covariates, in header order. Ground truth is absent.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    for name in (treatment_col, outcome_col, env_col):
        if name not in header:
            raise MissingColumn(f"column {name!r} not found in header")
    idx = {name: header.index(name) for name in header}
    cov_names = [c for c in header if c not in (treatment_col, outcome_col, env_col)]

    def parse(row_no: int, col: str, raw: str) -> float:
        try:
            return float(raw)
        except ValueError:
            raise NonNumericCell(row_no, col) from None

    by_env: dict[str, list[tuple[list[float], float, float]]] = {}
    order: list[str] = []
    for i, row in enumerate(rows):
        env = row[idx[env_col]]
        if env not in by_env:
            by_env[env] = []
            order.append(env)
        t = parse(i, treatment_col, row[idx[treatment_col]])
        y = parse(i, outcome_col, row[idx[outcome_col]])
        xs = [parse(i, c, row[idx[c]]) for c in cov_names]
        by_env[env].append((xs, t, y))

    if len(order) < 2:
        raise FewerThanTwoEnvironments(
            f"env column {env_col!r} has {len(order)} distinct value(s)"
        )
    envs = []
    for env in order:
        recs = by_env[env]
        x = np.array([r[0] for r in recs], dtype=np.float64)
        t = np.array([r[1] for r in recs], dtype=np.float64)
        y = np.array([r[2] for r in recs], dtype=np.float64)
        envs.append(EnvData(env, x, t, y))
    return MultiEnvDataset(tuple(envs))


def save_multi_env_csv(data: MultiEnvDataset, path, ite_col: Optional[str] = None) -> None:
    """Write the dataset as CSV with columns x0..x{d-1}, t, y, env [, ite]."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"x{j}" for j in range(data.d)] + ["t", "y", "env"]
        if ite_col:
            header.append(ite_col)
        writer.writerow(header)
        for e in data.envs:
            for i in range(e.n):
                row = [repr(v) for v in e.x[i]] + [repr(e.t[i]), repr(e.y[i]), e.env_id]
                if ite_col:
                    row.append(repr(e.truth.ite[i]) if e.truth is not None else "")
                writer.writerow(row)


def random_orthogonal(d: int, seed: int) -> np.ndarray:
    """Orthonormalize a matrix of standard normal draws; deterministic in seed."""
    if d < 1:
        raise DimensionMismatch("d must be >= 1")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d))
    q, r = np.linalg.qr(a)
    # Fix signs so the factorization (and hence the output) is unique.
    q = q * np.sign(np.diag(r))
    return q


ORTHO_INPUT_TOL = 1e-8


def scramble(data: MultiEnvDataset, s: np.ndarray) -> MultiEnvDataset:
    """Replace each env's covariates x by x @ s for an orthogonal s.

    Role labels are erased (set to MIXED): linear mixing makes per-column
    roles meaningless.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (data.d, data.d):
        raise DimensionMismatch(f"expected a {data.d} x {data.d} matrix, got {s.shape}")
    if np.max(np.abs(s.T @ s - np.eye(data.d))) > ORTHO_INPUT_TOL:
        raise NotOrthogonal("matrix is not orthogonal within 1e-8")
    new_envs = []
    for e in data.envs:
        truth = e.truth
        if truth is not None:
            truth = GroundTruth(
                ite=truth.ite,
                roles=(CovariateRole.MIXED,) * data.d,
                propensity=truth.propensity,
            )
        new_envs.append(EnvData(e.env_id, e.x @ s, e.t, e.y, truth, e.meta))
    meta = dict(data.meta or {})
    meta["scramble"] = s
    return MultiEnvDataset(tuple(new_envs), meta=meta)
