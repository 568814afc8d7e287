"""Plug-in causal estimators and evaluation metrics (SATT, CATE, MAE, PEHE)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import EnvData, MultiEnvDataset
from .errors import IndexOutOfRange, NoGroundTruth, NoTreatedUnits
from .models import LossKind, Ols2Params, both_arms


def satt_hat(params, env: EnvData, loss: LossKind = LossKind.SQUARED) -> float:
    """Plug-in SATT: mean of Q(1,x) - Q(0,x) over treated rows.

    Under cross entropy the contrast is on the probability scale. With
    mediators in the covariate set the same quantity estimates the natural
    direct effect on the treated; no separate computation is needed.
    """
    treated = env.t == 1.0
    if not treated.any():
        raise NoTreatedUnits(f"env {env.env_id!r} has no treated units")
    q0, q1 = both_arms(params, env.x[treated], loss)
    return float(np.mean(q1 - q0))


def true_satt(env: EnvData) -> float:
    """Mean of the stored unit-level effects over treated rows."""
    if env.truth is None:
        raise NoGroundTruth(f"env {env.env_id!r} carries no ground truth")
    treated = env.t == 1.0
    if not treated.any():
        raise NoTreatedUnits(f"env {env.env_id!r} has no treated units")
    return float(np.mean(env.truth.ite[treated]))


def cate_hat(params, x: np.ndarray, loss: LossKind = LossKind.SQUARED):
    """Model CATE at x: Q(1,x) - Q(0,x)."""
    q0, q1 = both_arms(params, x, loss)
    if np.isscalar(q0):
        return q1 - q0
    return q1 - q0


def pehe(params, env: EnvData, loss: LossKind = LossKind.SQUARED) -> float:
    """Mean squared CATE error over all rows (no square root)."""
    if env.truth is None:
        raise NoGroundTruth(f"env {env.env_id!r} carries no ground truth")
    tau_hat = cate_hat(params, env.x, loss)
    return float(np.mean((tau_hat - env.truth.ite) ** 2))


def noncausal_weight_error(params: Ols2Params, noncausal_cols: Sequence[int]) -> float:
    """Mean over both arms of the mean squared weight on the given columns."""
    cols = list(noncausal_cols)
    if any(c < 0 or c >= params.d for c in cols):
        raise IndexOutOfRange(f"column index outside 0..{params.d - 1}")
    return 0.5 * float(np.mean(params.w0[cols] ** 2) + np.mean(params.w1[cols] ** 2))


@dataclass
class EnvEstimate:
    env_id: str
    satt_hat: float
    satt_true: Optional[float] = None
    mae_satt: Optional[float] = None
    pehe: Optional[float] = None


@dataclass
class EstimateReport:
    envs: list[EnvEstimate]
    avg_mae: Optional[float] = None
    pooled_pehe: Optional[float] = None
    weight_error: Optional[float] = None

    def to_json(self) -> dict:
        return {
            "envs": [vars(e) for e in self.envs],
            "avg_mae": self.avg_mae,
            "pooled_pehe": self.pooled_pehe,
            "weight_error": self.weight_error,
        }

    def csv_rows(self) -> list[dict]:
        rows = []
        for e in self.envs:
            rows.append({
                "env": e.env_id,
                "satt_hat": e.satt_hat,
                "satt_true": e.satt_true,
                "mae": e.mae_satt,
                "pehe": e.pehe,
            })
        return rows


def evaluate(
    params,
    data: MultiEnvDataset,
    loss: LossKind = LossKind.SQUARED,
    noncausal_cols: Optional[Sequence[int]] = None,
) -> EstimateReport:
    """Per-env SATT estimates, MAE against truth where present, pooled PEHE."""
    env_reports = []
    sq_err_sum = 0.0
    n_total = 0
    any_truth = False
    for env in data.envs:
        est = satt_hat(params, env, loss)
        rec = EnvEstimate(env_id=env.env_id, satt_hat=est)
        if env.truth is not None:
            rec.satt_true = true_satt(env)
            rec.mae_satt = abs(est - rec.satt_true)
            rec.pehe = pehe(params, env, loss)
            sq_err_sum += rec.pehe * env.n
            n_total += env.n
            any_truth = True
        env_reports.append(rec)
    report = EstimateReport(envs=env_reports)
    if any_truth:
        maes = [e.mae_satt for e in env_reports if e.mae_satt is not None]
        report.avg_mae = float(np.mean(maes))
        report.pooled_pehe = sq_err_sum / n_total
    if noncausal_cols is not None and isinstance(params, Ols2Params):
        report.weight_error = noncausal_weight_error(params, noncausal_cols)
    return report
