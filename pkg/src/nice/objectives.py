"""ERM and IRMv1 objectives, the closed-form invariance penalty, and Adam training."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import EnvData, MultiEnvDataset
from .dgp import sigmoid
from .errors import DivergenceDetected
from .models import (
    DragonnetParams,
    LossKind,
    Ols2Params,
    backprop,
    l2_mask,
    loss_grad_raw,
    loss_value,
    params_to_vector,
    raw_outputs,
    vector_to_params,
)


class Objective(enum.Enum):
    ERM = "erm"
    IRMV1 = "irmv1"


@dataclass(frozen=True)
class TrainConfig:
    objective: Objective
    lam: float = 0.0
    loss: LossKind = LossKind.SQUARED
    learning_rate: float = 0.001
    l2: float = 0.0001
    epochs: int = 1000
    batch: Optional[int] = None  # None = full batch
    seed: int = 0
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    alpha_t: float = 1.0  # treatment-head weight, Dragonnet only
    env_weighting: bool = False  # ERM: weight environments equally instead of rows

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")


@dataclass
class TrainReport:
    objective: list[float]
    env_risks: list[list[float]]
    env_penalties: list[list[float]]
    params: object

    def to_json(self) -> dict:
        return {
            "objective": self.objective,
            "env_risks": self.env_risks,
            "env_penalties": self.env_penalties,
        }


def default_lambda(params) -> float:
    """10 in the linear settings, 100 for the networks."""
    return 10.0 if isinstance(params, Ols2Params) else 100.0


# ---------------------------------------------------------------------------
# IRM penalty
# ---------------------------------------------------------------------------

def _penalty_terms(raw: np.ndarray, y: np.ndarray, loss: LossKind):
    """Scalar derivative D of the risk in a classifier multiplier w at w=1,
    and dD/draw per row. Penalty is D**2."""
    n = raw.shape[0]
    if loss is LossKind.SQUARED:
        d = (2.0 / n) * np.sum(raw * (raw - y))
        dd_draw = (2.0 / n) * (2.0 * raw - y)
    else:
        s = sigmoid(raw)
        d = np.sum(raw * (s - y)) / n
        dd_draw = ((s - y) + raw * s * (1.0 - s)) / n
    return d, dd_draw


def irm_penalty(params, env: EnvData, loss: LossKind) -> float:
    """Squared derivative of the env risk in a scalar output multiplier at 1.0.

    Closed forms: squared loss -> ((2/n) sum q_i (q_i - y_i))^2; cross
    entropy -> ((1/n) sum z_i (sigmoid(z_i) - y_i))^2 with z the logit.
    """
    raw, _ = raw_outputs(params, env.t, env.x)
    d, _ = _penalty_terms(raw, env.y, loss)
    return float(d * d)


# ---------------------------------------------------------------------------
# Full objectives (value + exact gradient)
# ---------------------------------------------------------------------------

def _l2_term(params, l2: float):
    vec = params_to_vector(params)
    mask = l2_mask(params)
    return float(l2 * np.sum(mask * vec * vec)), 2.0 * l2 * mask * vec


def _treatment_head_parts(params, cache, env, alpha_t):
    """Dragonnet extra loss on the t-head logit; returns (value, d/d t_logit)."""
    if not isinstance(params, DragonnetParams) or alpha_t == 0.0:
        return 0.0, None
    tl = cache.t_logit
    val = alpha_t * loss_value(tl, env.t, LossKind.BINARY_CROSS_ENTROPY)
    grad = alpha_t * (sigmoid(tl) - env.t) / env.n
    return val, grad


def irmv1_objective(params, data: MultiEnvDataset, cfg: TrainConfig):
    """sum_e [risk_e + lambda * penalty_e] + l2 |weights|^2, with exact gradient."""
    value = 0.0
    grad = np.zeros(params_to_vector(params).size)
    env_risks, env_penalties = [], []
    for env in data.envs:
        raw, cache = raw_outputs(params, env.t, env.x)
        r = loss_value(raw, env.y, cfg.loss)
        d, dd_draw = _penalty_terms(raw, env.y, cfg.loss)
        pen = d * d
        tval, tgrad = _treatment_head_parts(params, cache, env, cfg.alpha_t)
        value += r + cfg.lam * pen + tval
        d_out = loss_grad_raw(raw, env.y, cfg.loss) + cfg.lam * 2.0 * d * dd_draw
        g = backprop(params, cache, d_out, d_tlogit=tgrad)
        grad += params_to_vector(g)
        env_risks.append(float(r))
        env_penalties.append(float(pen))
    l2v, l2g = _l2_term(params, cfg.l2)
    return value + l2v, grad + l2g, env_risks, env_penalties


def erm_objective(params, data: MultiEnvDataset, cfg: TrainConfig):
    """Pooled mean loss over all rows of all envs (row-weighted) + l2 term."""
    total_n = sum(env.n for env in data.envs)
    value = 0.0
    grad = np.zeros(params_to_vector(params).size)
    env_risks = []
    for env in data.envs:
        raw, cache = raw_outputs(params, env.t, env.x)
        r = loss_value(raw, env.y, cfg.loss)
        weight = (1.0 / len(data.envs)) if cfg.env_weighting else (env.n / total_n)
        tval, tgrad = _treatment_head_parts(params, cache, env, cfg.alpha_t)
        value += weight * (r + tval)
        d_out = weight * loss_grad_raw(raw, env.y, cfg.loss)
        if tgrad is not None:
            tgrad = weight * tgrad
        g = backprop(params, cache, d_out, d_tlogit=tgrad)
        grad += params_to_vector(g)
        env_risks.append(float(r))
    l2v, l2g = _l2_term(params, cfg.l2)
    return value + l2v, grad + l2g, env_risks, [0.0] * len(data.envs)


def _objective(params, data, cfg):
    if cfg.objective is Objective.IRMV1:
        return irmv1_objective(params, data, cfg)
    return erm_objective(params, data, cfg)


def _env_batches(data: MultiEnvDataset, batch: int, rng: np.random.Generator):
    """Synchronized per-env minibatch datasets covering one epoch."""
    per_env = []
    n_steps = 0
    for env in data.envs:
        perm = rng.permutation(env.n)
        chunks = [perm[i:i + batch] for i in range(0, env.n, batch)]
        per_env.append(chunks)
        n_steps = max(n_steps, len(chunks))
    for k in range(n_steps):
        envs = []
        for env, chunks in zip(data.envs, per_env):
            idx = chunks[k % len(chunks)]
            envs.append(EnvData(env.env_id, env.x[idx], env.t[idx], env.y[idx]))
        yield MultiEnvDataset(tuple(envs))


def train(model_init, data: MultiEnvDataset, cfg: TrainConfig) -> TrainReport:
    """Adam training loop; deterministic in cfg.seed.

    Records the full-data objective, per-env risk, and per-env penalty at the
    start of every epoch, before that epoch's update(s).
    """
    template = model_init
    theta = params_to_vector(model_init).copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2 = cfg.adam_betas
    step = 0
    rng = np.random.default_rng(cfg.seed)

    objective_trace: list[float] = []
    risks_trace: list[list[float]] = []
    pens_trace: list[list[float]] = []

    def adam_step(grad):
        nonlocal step, theta, m, v
        step += 1
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        mhat = m / (1 - b1 ** step)
        vhat = v / (1 - b2 ** step)
        theta = theta - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)

    for _ in range(cfg.epochs):
        params = vector_to_params(theta, template)
        value, grad, env_risks, env_pens = _objective(params, data, cfg)
        if not np.isfinite(value):
            raise DivergenceDetected(f"objective became non-finite at step {step}")
        objective_trace.append(float(value))
        risks_trace.append(env_risks)
        pens_trace.append(env_pens)
        if cfg.batch is None:
            adam_step(grad)
        else:
            for sub in _env_batches(data, cfg.batch, rng):
                p = vector_to_params(theta, template)
                _, g, _, _ = _objective(p, sub, cfg)
                if not np.all(np.isfinite(g)):
                    raise DivergenceDetected(f"gradient became non-finite at step {step}")
                adam_step(g)

    return TrainReport(
        objective=objective_trace,
        env_risks=risks_trace,
        env_penalties=pens_trace,
        params=vector_to_params(theta, template),
    )
