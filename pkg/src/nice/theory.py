"""Numerical verifiers for the collider-bias coarsening bound and overlap preservation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .dataset import EnvData
from .errors import NoGroundTruth, ZeroMassCondition
from .models import LossKind, both_arms

PMF_TOL = 1e-12


@dataclass(frozen=True)
class JointPmf3:
    """Exact joint pmf over binary (T, Y, X), stored as an array p[t, y, x]."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.shape != (2, 2, 2):
            raise ValueError("pmf must have shape (2, 2, 2)")
        if np.any(p < 0.0) or abs(p.sum() - 1.0) > PMF_TOL:
            raise ValueError("pmf entries must be nonnegative and sum to 1")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "p", p)

    def p_x(self, c: int) -> float:
        return float(self.p[:, :, c].sum())


@dataclass(frozen=True)
class Coarsening:
    """Flip channel: Phi equals X with probability alpha, else 1 - X."""

    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")


def _cov_ty(p: np.ndarray) -> float:
    et = p[1, :, :].sum()
    ey = p[:, 1, :].sum()
    ety = p[1, 1, :].sum()
    return float(ety - et * ey)


def collider_bias(pmf: JointPmf3, c: int) -> float:
    """cov(T, Y | X=c) - cov(T, Y), exactly from the pmf."""
    px = pmf.p_x(c)
    if px <= 0.0:
        raise ZeroMassCondition(f"P(X={c}) = 0")
    cond = pmf.p[:, :, c] / px
    cond3 = cond[:, :, None]  # reuse the joint covariance on the conditional
    return _cov_ty(cond3) - _cov_ty(pmf.p)


def aggregate_bias(pmf: JointPmf3) -> float:
    """|P(X=1) D(X=1) + P(X=0) D(X=0)| where D is the conditional bias."""
    return abs(
        pmf.p_x(1) * collider_bias(pmf, 1) + pmf.p_x(0) * collider_bias(pmf, 0)
    )


def coarsen_pmf(pmf: JointPmf3, c: Coarsening) -> JointPmf3:
    """Induced joint over (T, Y, Phi) where Phi flips X with prob 1 - alpha."""
    a = c.alpha
    q = np.empty((2, 2, 2))
    q[:, :, 0] = a * pmf.p[:, :, 0] + (1.0 - a) * pmf.p[:, :, 1]
    q[:, :, 1] = a * pmf.p[:, :, 1] + (1.0 - a) * pmf.p[:, :, 0]
    return JointPmf3(q)


def coarsened_bias(pmf: JointPmf3, c: Coarsening) -> float:
    """Aggregate collider bias of the coarsened variable Phi."""
    return aggregate_bias(coarsen_pmf(pmf, c))


@dataclass
class ColliderTheoremReport:
    trials: int
    checked: int
    skipped: int
    violations: list[dict]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "trials": self.trials,
            "checked": self.checked,
            "skipped": self.skipped,
            "violations": self.violations,
            "ok": self.ok,
        }


def _symmetrize_x(p: np.ndarray) -> np.ndarray:
    # Mixing a pmf with its X-flipped image enforces P(X=1) = 0.5 exactly.
    return 0.5 * (p + p[:, :, ::-1])


def verify_collider_theorem(trials: int, seed: int = 0) -> ColliderTheoremReport:
    """Brute-force check of the coarsening bound on random pmfs.

    Samples pmfs with P(X=1) = 0.5 (by symmetrization), keeps those whose two
    conditional biases share a sign, draws alpha in [0.5, 1], and asserts both
    the inequality bias(Phi) <= bias(X) + 1e-12 and the exact factor identity
    bias(Phi) = (2 alpha - 1)^2 bias(X) within 1e-10.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    checked = 0
    skipped = 0
    violations = []
    for i in range(trials):
        raw = rng.exponential(size=(2, 2, 2))
        p = _symmetrize_x(raw / raw.sum())
        pmf = JointPmf3(p)
        d1 = collider_bias(pmf, 1)
        d0 = collider_bias(pmf, 0)
        if d1 * d0 <= 0.0:
            # Hypothesis-violating draw: the same-sign condition fails.
            skipped += 1
            continue
        alpha = float(rng.uniform(0.5, 1.0))
        bias_x = aggregate_bias(pmf)
        bias_phi = coarsened_bias(pmf, Coarsening(alpha))
        checked += 1
        ok_ineq = bias_phi <= bias_x + 1e-12
        ok_ident = abs(bias_phi - (2.0 * alpha - 1.0) ** 2 * bias_x) <= 1e-10
        if not (ok_ineq and ok_ident):
            violations.append({
                "trial": i,
                "alpha": alpha,
                "bias_x": bias_x,
                "bias_phi": bias_phi,
                "pmf": p.tolist(),
            })
    return ColliderTheoremReport(
        trials=trials, checked=checked, skipped=skipped, violations=violations
    )


@dataclass
class OverlapReport:
    eps: float
    slack: float
    bin_rates: list[float]
    bin_counts: list[int]
    lower: float
    upper: float

    @property
    def ok(self) -> bool:
        return all(self.lower <= r <= self.upper for r in self.bin_rates)

    def to_json(self) -> dict:
        return {
            "eps": self.eps,
            "slack": self.slack,
            "bin_rates": self.bin_rates,
            "bin_counts": self.bin_counts,
            "lower": self.lower,
            "upper": self.upper,
            "ok": self.ok,
        }


def overlap_check(
    env: EnvData,
    representation: Union[np.ndarray, object],
    bins: int = 20,
    loss: LossKind = LossKind.SQUARED,
) -> OverlapReport:
    """Empirical check that the representation preserves overlap.

    eps comes from the true propensities. The representation score is either
    a user-supplied per-row vector or a fitted model, in which case the score
    is the model contrast q1 - q0. Scores are cut into equal-count bins and
    every bin's treated rate must lie in [eps - slack, 1 - eps + slack] with
    slack = 3 sqrt(eps (1 - eps) / bin_count).
    """
    if env.truth is None or env.truth.propensity is None:
        raise NoGroundTruth("overlap check needs true propensities")
    prop = env.truth.propensity
    eps = float(np.min(np.minimum(prop, 1.0 - prop)))
    if isinstance(representation, np.ndarray):
        scores = np.asarray(representation, dtype=np.float64)
    else:
        q0, q1 = both_arms(representation, env.x, loss)
        scores = q1 - q0
    order = np.argsort(scores, kind="stable")
    parts = np.array_split(order, bins)
    parts = [p for p in parts if p.size > 0]
    min_count = min(p.size for p in parts)
    slack = 3.0 * np.sqrt(eps * (1.0 - eps) / min_count)
    rates = [float(env.t[p].mean()) for p in parts]
    counts = [int(p.size) for p in parts]
    return OverlapReport(
        eps=eps,
        slack=float(slack),
        bin_rates=rates,
        bin_counts=counts,
        lower=eps - float(slack),
        upper=1.0 - eps + float(slack),
    )
