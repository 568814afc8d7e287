"""Synthetic data generating processes for the linear and nonlinear experiments."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import CovariateRole, EnvData, GroundTruth, MultiEnvDataset
from .errors import (
    FewerThanTwoEnvironments,
    NotThreeEnvironments,
    ScaleCountMismatch,
)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Graph(enum.Enum):
    NOISE = "noise"
    DESCENDANT = "descendant"
    COLLIDER = "collider"


_X2_ROLE = {
    Graph.NOISE: CovariateRole.NOISE,
    Graph.DESCENDANT: CovariateRole.DESCENDANT,
    Graph.COLLIDER: CovariateRole.COLLIDER,
}


@dataclass(frozen=True)
class LinearDgpConfig:
    graph: Graph
    e: float
    n: int
    seed: int
    d_conf: int = 5
    d_x2: int = 5
    heteroskedastic: bool = False
    w_xt: Optional[np.ndarray] = None
    w_xy: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.e <= 0 or self.n < 1 or self.d_conf < 1 or self.d_x2 < 1:
            raise ValueError("require e > 0, n >= 1, d_conf >= 1, d_x2 >= 1")


def default_linear_weights(d_conf: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Confounder weights drawn i.i.d. Uniform(0.5, 1.5), so confounding is genuine."""
    rng = np.random.default_rng(seed)
    w_xt = rng.uniform(0.5, 1.5, size=d_conf)
    w_xy = rng.uniform(0.5, 1.5, size=d_conf)
    return w_xt, w_xy


def gen_linear_env(cfg: LinearDgpConfig) -> EnvData:
    """One environment of the linear three-graph family.

    X1 ~ N(0, e^2) per coordinate, T ~ Bern(sigmoid(X1 w_xt + N(0,1))),
    tau = 5 + N(0, sigma^2) with sigma = e (heteroskedastic) or 1,
    Y = X1 w_xy + T tau + N(0, e^2), and X2 is noise / e*Y+noise /
    e*Y+T+noise depending on the graph.
    """
    rng = np.random.default_rng(cfg.seed)
    e, n = cfg.e, cfg.n
    w_xt = cfg.w_xt if cfg.w_xt is not None else default_linear_weights(cfg.d_conf, cfg.seed)[0]
    w_xy = cfg.w_xy if cfg.w_xy is not None else default_linear_weights(cfg.d_conf, cfg.seed)[1]
    w_xt = np.asarray(w_xt, dtype=np.float64)
    w_xy = np.asarray(w_xy, dtype=np.float64)

    x1 = e * rng.standard_normal((n, cfg.d_conf))
    propensity = sigmoid(x1 @ w_xt + rng.standard_normal(n))
    t = (rng.uniform(size=n) < propensity).astype(np.float64)
    # Large-scale environments saturate the sigmoid to exactly 0/1 in float64;
    # the stored propensity stays in the open interval.
    propensity = np.clip(propensity, 1e-12, 1.0 - 1e-12)
    sigma = e if cfg.heteroskedastic else 1.0
    tau = 5.0 + sigma * rng.standard_normal(n)
    y = x1 @ w_xy + t * tau + e * rng.standard_normal(n)

    noise2 = rng.standard_normal((n, cfg.d_x2))
    if cfg.graph is Graph.NOISE:
        x2 = noise2
    elif cfg.graph is Graph.DESCENDANT:
        x2 = e * y[:, None] + noise2
    else:
        x2 = e * y[:, None] + t[:, None] + noise2

    roles = (CovariateRole.CONFOUNDER,) * cfg.d_conf + (_X2_ROLE[cfg.graph],) * cfg.d_x2
    truth = GroundTruth(ite=tau, roles=roles, propensity=propensity)
    meta = {"e": e, "graph": cfg.graph.value, "w_xt": w_xt, "w_xy": w_xy}
    return EnvData(env_id=f"e={e:g}", x=np.hstack([x1, x2]), t=t, y=y, truth=truth, meta=meta)


def gen_linear_suite(
    graph: Graph,
    environments: Sequence[float],
    n_per_env: int,
    seed: int,
    heteroskedastic: bool = False,
    d_conf: int = 5,
    d_x2: int = 5,
) -> MultiEnvDataset:
    """Suite of linear environments sharing one causal mechanism (w_xt, w_xy)."""
    if len(environments) < 2:
        raise FewerThanTwoEnvironments("need at least 2 environment scales")
    w_xt, w_xy = default_linear_weights(d_conf, seed)
    ss = np.random.SeedSequence(seed)
    env_seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(len(environments))]
    envs = []
    for e, es in zip(environments, env_seeds):
        cfg = LinearDgpConfig(
            graph=graph, e=float(e), n=n_per_env, seed=es, d_conf=d_conf,
            d_x2=d_x2, heteroskedastic=heteroskedastic, w_xt=w_xt, w_xy=w_xy,
        )
        envs.append(gen_linear_env(cfg))
    meta = {
        "graph": graph.value,
        "environments": [float(e) for e in environments],
        "seed": seed,
        "heteroskedastic": heteroskedastic,
        "w_xt": w_xt,
        "w_xy": w_xy,
        "noncausal_cols": list(range(d_conf, d_conf + d_x2)),
    }
    return MultiEnvDataset(tuple(envs), meta=meta)


@dataclass(frozen=True)
class NonlinearDgpConfig:
    e: float
    n: int
    seed: int
    d_a: int = 10
    d_x: int = 30  # X_t = first 12 columns, X_y = next 18
    include_z: bool = True
    weights: Optional[dict] = None

    def __post_init__(self):
        if self.e <= 0 or self.n < 1 or self.d_x != 30:
            raise ValueError("require e > 0, n >= 1, d_x = 30")


def default_nonlinear_weights(d_a: int, seed: int) -> dict:
    """All weight vectors i.i.d. Uniform(-1, 1) scaled by 1/sqrt(dim)."""
    rng = np.random.default_rng(seed)

    def u(*shape):
        return rng.uniform(-1.0, 1.0, size=shape) / np.sqrt(shape[0])

    return {
        "w_ax": u(d_a, 30),
        "w_xt": u(12),
        "w_xt2": u(12),   # weights on the interaction features of X_t
        "w_xy": u(12),
        "w_xy2": u(18),   # weights on the interaction features of X_y
    }


def _interactions_t(xt: np.ndarray) -> np.ndarray:
    msq = np.square(xt).mean()
    return np.hstack([
        xt[:, :1] * xt[:, 1:2],
        xt[:, 1:2] * xt[:, 2:4],
        xt[:, 2:3] * xt[:, 3:] / msq,
    ])


def _interactions_y(xy: np.ndarray) -> np.ndarray:
    msq = np.square(xy).mean()
    return np.hstack([
        xy[:, :1] * xy[:, 4:5],
        xy[:, 1:2] * xy[:, 3:4],
        xy[:, 1:2] * xy[:, 2:] / msq,
    ])


def gen_nonlinear_env(cfg: NonlinearDgpConfig) -> EnvData:
    """One environment of the nonlinear mixing-diversity system.

    A ~ N(0, e^2); X = A w_ax; T ~ Bern(sigmoid(f(X_t))); Y ~ Bern(sigmoid(g))
    with g = 1.25 T + X_t w_xy + 2 p_t + m(X_y) w_xy2; Z = Y + T + N(0,1).
    Covariates are (X, A) plus Z when include_z. ite is the probability
    contrast p_y(T=1) - p_y(T=0).
    """
    rng = np.random.default_rng(cfg.seed)
    w = cfg.weights if cfg.weights is not None else default_nonlinear_weights(cfg.d_a, cfg.seed)

    a = cfg.e * rng.standard_normal((cfg.n, cfg.d_a))
    x = a @ w["w_ax"]
    xt, xy = x[:, :12], x[:, 12:30]

    f = xt @ w["w_xt"] + _interactions_t(xt) @ w["w_xt2"]
    p_t = sigmoid(f)
    t = (rng.uniform(size=cfg.n) < p_t).astype(np.float64)

    def g(tv):
        return 1.25 * tv + xt @ w["w_xy"] + 2.0 * p_t + _interactions_y(xy) @ w["w_xy2"]

    p_y1 = sigmoid(g(np.ones(cfg.n)))
    p_y0 = sigmoid(g(np.zeros(cfg.n)))
    p_y = np.where(t == 1.0, p_y1, p_y0)
    y = (rng.uniform(size=cfg.n) < p_y).astype(np.float64)
    z = y + t + rng.standard_normal(cfg.n)

    cols = [x, a]
    roles = (
        (CovariateRole.CONFOUNDER,) * 12
        + (CovariateRole.PARENT_OF_Y_ONLY,) * 18
        + (CovariateRole.MIXED,) * cfg.d_a
    )
    if cfg.include_z:
        cols.append(z[:, None])
        roles = roles + (CovariateRole.COLLIDER,)
    truth = GroundTruth(ite=p_y1 - p_y0, roles=roles, propensity=p_t)
    meta = {"e": cfg.e, "p_t": p_t, "p_y": p_y}
    return EnvData(env_id=f"e={cfg.e:g}", x=np.hstack(cols), t=t, y=y, truth=truth, meta=meta)


def gen_nonlinear_suite(
    environments: Sequence[float],
    n_per_env: int,
    seed: int,
    d_a: int = 10,
    include_z: bool = True,
) -> MultiEnvDataset:
    """Nonlinear environments sharing one set of structural weights."""
    if len(environments) < 2:
        raise FewerThanTwoEnvironments("need at least 2 environment scales")
    weights = default_nonlinear_weights(d_a, seed)
    ss = np.random.SeedSequence(seed)
    env_seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(len(environments))]
    envs = [
        gen_nonlinear_env(NonlinearDgpConfig(
            e=float(e), n=n_per_env, seed=es, d_a=d_a,
            include_z=include_z, weights=weights,
        ))
        for e, es in zip(environments, env_seeds)
    ]
    meta = {
        "environments": [float(e) for e in environments],
        "seed": seed,
        "include_z": include_z,
        "collider_col": 30 + d_a if include_z else None,
    }
    return MultiEnvDataset(tuple(envs), meta=meta)


@dataclass(frozen=True)
class MixtureSpec:
    proportions: tuple[float, float, float]

    def __post_init__(self):
        p = tuple(float(v) for v in self.proportions)
        if any(v < 0 for v in p) or abs(sum(p) - 1.0) > 1e-12:
            raise ValueError("proportions must be nonnegative and sum to 1")
        object.__setattr__(self, "proportions", p)


def diversity(spec: MixtureSpec) -> float:
    """(1/3) sum over unordered pairs of |p_i - p_j|; ranges over [0, 2/3]."""
    p = spec.proportions
    return (abs(p[0] - p[1]) + abs(p[0] - p[2]) + abs(p[1] - p[2])) / 3.0


def _chunk_sizes(n: int, fractions: Sequence[float]) -> list[int]:
    sizes = [round(f * n) for f in fractions]
    # Residual rows go to the largest fraction so totals are preserved.
    sizes[int(np.argmax(fractions))] += n - sum(sizes)
    return sizes


def mix_environments(
    sources: MultiEnvDataset, spec: MixtureSpec, seed: int
) -> MultiEnvDataset:
    """Three new environments mixing the three sources by cyclic proportion shifts.

    New env k takes fractions (p_{k}, p_{k+1}, p_{k+2}) (cyclic) of the rows of
    sources 1, 2, 3 respectively, sampled without replacement; each source's
    rows are partitioned across the new envs, preserving the global multiset.
    """
    if len(sources.envs) != 3:
        raise NotThreeEnvironments("mixing requires exactly 3 source environments")
    p = spec.proportions
    # take[k][j]: fraction of source j's rows that new env k receives
    take = [
        (p[0], p[1], p[2]),
        (p[1], p[2], p[0]),
        (p[2], p[0], p[1]),
    ]
    rng = np.random.default_rng(seed)
    # Partition each source's shuffled rows into three chunks, one per new env.
    chunks: list[list[np.ndarray]] = []
    for j, env in enumerate(sources.envs):
        perm = rng.permutation(env.n)
        sizes = _chunk_sizes(env.n, [take[k][j] for k in range(3)])
        splits = np.split(perm, np.cumsum(sizes)[:-1])
        chunks.append(splits)

    new_envs = []
    for k in range(3):
        xs, ts, ys, ites, props = [], [], [], [], []
        roles = sources.envs[0].truth.roles if sources.envs[0].truth else None
        has_truth = all(e.truth is not None for e in sources.envs)
        has_prop = has_truth and all(e.truth.propensity is not None for e in sources.envs)
        for j, env in enumerate(sources.envs):
            idx = chunks[j][k]
            if idx.size == 0:
                continue
            xs.append(env.x[idx])
            ts.append(env.t[idx])
            ys.append(env.y[idx])
            if has_truth:
                ites.append(env.truth.ite[idx])
                if has_prop:
                    props.append(env.truth.propensity[idx])
        truth = None
        if has_truth:
            truth = GroundTruth(
                ite=np.concatenate(ites),
                roles=roles,
                propensity=np.concatenate(props) if has_prop else None,
            )
        new_envs.append(EnvData(
            env_id=f"mix{k + 1}",
            x=np.vstack(xs),
            t=np.concatenate(ts),
            y=np.concatenate(ys),
            truth=truth,
        ))
    meta = dict(sources.meta or {})
    meta["mixture"] = p
    return MultiEnvDataset(tuple(new_envs), meta=meta)


def augment_with_colliders(
    data: MultiEnvDataset, copies: int, scales: Sequence[float], seed: int = 0
) -> MultiEnvDataset:
    """Append `copies` collider columns X_co = T + Y + N(0, scale^2) per env."""
    if copies < 1:
        raise ValueError("copies must be >= 1")
    if len(scales) != len(data.envs):
        raise ScaleCountMismatch(
            f"{len(scales)} scales for {len(data.envs)} environments"
        )
    ss = np.random.SeedSequence(seed)
    env_seeds = ss.spawn(len(data.envs))
    new_envs = []
    for env, es, scale in zip(data.envs, env_seeds, scales):
        rng = np.random.default_rng(es)
        base = (env.t + env.y)[:, None]
        cols = base + scale * rng.standard_normal((env.n, copies))
        truth = env.truth
        if truth is not None:
            truth = GroundTruth(
                ite=truth.ite,
                roles=truth.roles + (CovariateRole.COLLIDER,) * copies,
                propensity=truth.propensity,
            )
        new_envs.append(EnvData(env.env_id, np.hstack([env.x, cols]), env.t, env.y, truth, env.meta))
    meta = dict(data.meta or {})
    meta["collider_copies"] = copies
    meta["collider_cols"] = list(range(data.d, data.d + copies))
    return MultiEnvDataset(tuple(new_envs), meta=meta)


def write_sidecar(data: MultiEnvDataset, path) -> None:
    """JSON sidecar recording config, seed, weights, and true SATT per env."""
    meta = dict(data.meta or {})
    doc = {}
    for key, val in meta.items():
        doc[key] = val.tolist() if isinstance(val, np.ndarray) else val
    satt = {}
    for env in data.envs:
        if env.truth is not None and env.t.sum() > 0:
            satt[env.env_id] = float(env.truth.ite[env.t == 1.0].mean())
    doc["true_satt"] = satt
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
