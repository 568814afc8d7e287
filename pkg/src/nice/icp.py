"""Simplified invariant causal prediction baseline.

Exhaustive subset search with a cross-environment residual invariance test:
fit pooled least squares of y on (1, t, x[subset]) and compare each
environment's residual mean (z-test) and variance (two-sided F-test) against
the pooled residuals, Bonferroni-combined. Accepted sets are intersected to
produce the adjustment selection, which may be empty. This is a desk-scale
stand-in preserving the accept/intersect semantics of the original method,
not a faithful reimplementation of its exact tests.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .dataset import MultiEnvDataset
from .errors import IndexOutOfRange, SingularDesign, TooManySubsets

DEFAULT_SUBSET_BUDGET = 2 ** 20


@dataclass(frozen=True)
class IcpConfig:
    alpha: float = 0.05
    max_subset_size: Optional[int] = None
    budget: int = DEFAULT_SUBSET_BUDGET

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must be in (0, 1)")


@dataclass
class IcpResult:
    accepted_sets: list[tuple[int, ...]]
    selection: tuple[int, ...]
    p_values: dict[tuple[int, ...], float]


def invariance_test(data: MultiEnvDataset, subset: tuple[int, ...]) -> float:
    """Bonferroni-combined p-value of per-env residual mean/variance tests."""
    if any(j < 0 or j >= data.d for j in subset):
        raise IndexOutOfRange(f"subset indices must lie in 0..{data.d - 1}")
    xs, ts, ys, sizes = [], [], [], []
    for env in data.envs:
        xs.append(env.x[:, list(subset)])
        ts.append(env.t)
        ys.append(env.y)
        sizes.append(env.n)
    x = np.vstack(xs)
    t = np.concatenate(ts)
    y = np.concatenate(ys)
    design = np.column_stack([np.ones(len(y)), t, x])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise SingularDesign(f"rank-deficient design for subset {subset}")
    resid = y - design @ coef

    n_all = len(resid)
    mean_all = resid.mean()
    var_all = resid.var(ddof=1)
    p_values = []
    start = 0
    for n_e in sizes:
        r = resid[start:start + n_e]
        start += n_e
        # Mean: z-test of the env residual mean against the pooled mean.
        se = np.sqrt(r.var(ddof=1) / n_e + var_all / n_all)
        z = 0.0 if se == 0.0 else (r.mean() - mean_all) / se
        p_values.append(2.0 * stats.norm.sf(abs(z)))
        # Variance: two-sided F-test of the env variance against the pooled.
        if var_all == 0.0 or r.var(ddof=1) == 0.0:
            p_values.append(1.0 if r.var(ddof=1) == var_all else 0.0)
        else:
            f = r.var(ddof=1) / var_all
            dist = stats.f(n_e - 1, n_all - 1)
            # P(F >= f) + P(F <= 1/f): exactly 1 at f = 1.
            p_values.append(min(1.0, dist.sf(f) + dist.cdf(1.0 / f)))
    return min(1.0, len(p_values) * min(p_values))


def icp_select(data: MultiEnvDataset, cfg: IcpConfig = IcpConfig()) -> IcpResult:
    """Test every covariate subset up to max_subset_size; intersect accepted sets.

    Treatment t is always in the regression design and never a candidate.
    Subsets with a collinear design are skipped. When no set is accepted the
    selection is empty (downstream reports a zero effect).
    """
    d = data.d
    max_size = d if cfg.max_subset_size is None else min(cfg.max_subset_size, d)
    count = sum(_n_choose_k(d, k) for k in range(max_size + 1))
    if count > cfg.budget:
        raise TooManySubsets(f"{count} subsets exceeds budget {cfg.budget}")

    accepted: list[tuple[int, ...]] = []
    p_values: dict[tuple[int, ...], float] = {}
    for k in range(max_size + 1):
        for subset in itertools.combinations(range(d), k):
            try:
                p = invariance_test(data, subset)
            except SingularDesign:
                continue
            p_values[subset] = p
            if p >= cfg.alpha:
                accepted.append(subset)

    if accepted:
        sel = set(accepted[0])
        for s in accepted[1:]:
            sel &= set(s)
        selection = tuple(sorted(sel))
    else:
        selection = ()
    return IcpResult(accepted_sets=accepted, selection=selection, p_values=p_values)


def _n_choose_k(n: int, k: int) -> int:
    from math import comb
    return comb(n, k)
