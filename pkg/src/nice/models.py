"""Outcome predictors Q(t, x) with exact analytic gradients.

Three architectures: OLS-2 (two separate linear regressors, one per arm),
a TARNet-style two-headed network (shared trunk, per-arm outcome heads),
and a Dragonnet-style variant that adds a treatment-logit head on the
shared representation. All math is float64 numpy; gradients are computed
by hand-written reverse-mode accumulation and validated against central
finite differences in the test suite.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import EnvData
from .dgp import sigmoid
from .errors import BinaryYRequired, DimensionMismatch

PROB_FLOOR = 1e-7

SHARED_WIDTH = 250
HEAD_WIDTH = 100
N_SHARED_LAYERS = 4
N_HEAD_LAYERS = 3


class LossKind(enum.Enum):
    SQUARED = "squared"
    BINARY_CROSS_ENTROPY = "bce"


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------

Layer = tuple[np.ndarray, np.ndarray]  # (W of shape (fan_in, fan_out), b of shape (fan_out,))


@dataclass
class Ols2Params:
    w0: np.ndarray
    b0: float
    w1: np.ndarray
    b1: float

    @property
    def d(self) -> int:
        return self.w0.shape[0]


@dataclass
class TarnetParams:
    shared: list[Layer]
    head0: list[Layer]
    head1: list[Layer]

    @property
    def d(self) -> int:
        return self.shared[0][0].shape[0]


@dataclass
class DragonnetParams(TarnetParams):
    t_head: Layer = None  # type: ignore[assignment]


def init_ols2(d: int) -> Ols2Params:
    return Ols2Params(w0=np.zeros(d), b0=0.0, w1=np.zeros(d), b1=0.0)


def _he_layer(rng: np.random.Generator, fan_in: int, fan_out: int) -> Layer:
    w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
    return w, np.zeros(fan_out)


def _init_stack(rng, dims: list[int]) -> list[Layer]:
    return [_he_layer(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 1)]


def init_tarnet(
    d: int, seed: int, shared_width: int = SHARED_WIDTH, head_width: int = HEAD_WIDTH
) -> TarnetParams:
    rng = np.random.default_rng(seed)
    shared = _init_stack(rng, [d] + [shared_width] * N_SHARED_LAYERS)
    head0 = _init_stack(rng, [shared_width] + [head_width] * (N_HEAD_LAYERS - 1) + [1])
    head1 = _init_stack(rng, [shared_width] + [head_width] * (N_HEAD_LAYERS - 1) + [1])
    return TarnetParams(shared=shared, head0=head0, head1=head1)


def init_dragonnet(
    d: int, seed: int, shared_width: int = SHARED_WIDTH, head_width: int = HEAD_WIDTH
) -> DragonnetParams:
    rng = np.random.default_rng(seed)
    shared = _init_stack(rng, [d] + [shared_width] * N_SHARED_LAYERS)
    head0 = _init_stack(rng, [shared_width] + [head_width] * (N_HEAD_LAYERS - 1) + [1])
    head1 = _init_stack(rng, [shared_width] + [head_width] * (N_HEAD_LAYERS - 1) + [1])
    t_head = _he_layer(rng, shared_width, 1)
    return DragonnetParams(shared=shared, head0=head0, head1=head1, t_head=t_head)


# ---------------------------------------------------------------------------
# Flattening (used by the optimizer and the finite-difference oracle)
# ---------------------------------------------------------------------------

def _layer_arrays(layers: list[Layer]):
    for w, b in layers:
        yield w, True
        yield b, False


def _param_arrays(params):
    """Yields (array, is_weight) pairs in a fixed traversal order."""
    if isinstance(params, Ols2Params):
        yield params.w0, True
        yield np.atleast_1d(np.float64(params.b0)), False
        yield params.w1, True
        yield np.atleast_1d(np.float64(params.b1)), False
    elif isinstance(params, TarnetParams):
        yield from _layer_arrays(params.shared)
        yield from _layer_arrays(params.head0)
        yield from _layer_arrays(params.head1)
        if isinstance(params, DragonnetParams):
            yield from _layer_arrays([params.t_head])
    else:
        raise TypeError(f"unknown params type {type(params)!r}")


def params_to_vector(params) -> np.ndarray:
    return np.concatenate([a.ravel() for a, _ in _param_arrays(params)])


def l2_mask(params) -> np.ndarray:
    """1 for weight entries, 0 for intercepts (l2 excludes intercepts)."""
    return np.concatenate([
        np.full(a.size, 1.0 if isw else 0.0) for a, isw in _param_arrays(params)
    ])


def vector_to_params(vec: np.ndarray, template):
    """Rebuild a params object of template's type and shapes from a flat vector."""
    vec = np.asarray(vec, dtype=np.float64)
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        out = vec[pos:pos + size].reshape(shape).copy()
        pos += size
        return out

    if isinstance(template, Ols2Params):
        w0 = take(template.w0.shape)
        b0 = float(take((1,))[0])
        w1 = take(template.w1.shape)
        b1 = float(take((1,))[0])
        return Ols2Params(w0=w0, b0=b0, w1=w1, b1=b1)

    def take_stack(layers):
        return [(take(w.shape), take(b.shape)) for w, b in layers]

    shared = take_stack(template.shared)
    head0 = take_stack(template.head0)
    head1 = take_stack(template.head1)
    if isinstance(template, DragonnetParams):
        tw = take(template.t_head[0].shape)
        tb = take(template.t_head[1].shape)
        return DragonnetParams(shared=shared, head0=head0, head1=head1, t_head=(tw, tb))
    return TarnetParams(shared=shared, head0=head0, head1=head1)


def params_to_json(params) -> dict:
    arrays = [
        {"shape": list(a.shape), "data": a.ravel().tolist()}
        for a, _ in _param_arrays(params)
    ]
    kind = type(params).__name__
    return {"kind": kind, "arrays": arrays}


def params_from_json(doc: dict, template):
    vec = np.concatenate([np.asarray(a["data"], dtype=np.float64) for a in doc["arrays"]])
    return vector_to_params(vec, template)


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

def _stack_forward(layers: list[Layer], x: np.ndarray, relu_last: bool):
    """Returns (output, cache); hidden layers are rectified-linear."""
    acts = [x]
    zs = []
    for i, (w, b) in enumerate(layers):
        z = acts[-1] @ w + b
        zs.append(z)
        last = i == len(layers) - 1
        acts.append(np.maximum(z, 0.0) if (relu_last or not last) else z)
    return acts[-1], (acts, zs)


def _stack_backward(layers: list[Layer], cache, d_out: np.ndarray, relu_last: bool):
    """Backprop through a dense stack; returns (layer grads, grad wrt input)."""
    acts, zs = cache
    grads: list[Layer] = [None] * len(layers)  # type: ignore[list-item]
    da = d_out
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        last = i == len(layers) - 1
        dz = da * (zs[i] > 0.0) if (relu_last or not last) else da
        grads[i] = (acts[i].T @ dz, dz.sum(axis=0))
        da = dz @ w.T
    return grads, da


@dataclass
class _Cache:
    t: np.ndarray
    x: np.ndarray
    idx0: Optional[np.ndarray] = None
    idx1: Optional[np.ndarray] = None
    shared_cache: object = None
    rep: Optional[np.ndarray] = None
    head_caches: tuple = ()
    t_logit: Optional[np.ndarray] = None


def raw_outputs(params, t: np.ndarray, x: np.ndarray):
    """Pre-link outputs Q_raw(t_i, x_i) for all rows, with a backprop cache.

    Under squared loss the raw output is the prediction; under cross entropy
    it is a logit. Networks evaluate the shared representation once per row;
    each row is routed to the head selected by its treatment value.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.d:
        raise DimensionMismatch(f"expected covariate dimension {params.d}")
    if isinstance(params, Ols2Params):
        out = np.where(t == 1.0, x @ params.w1 + params.b1, x @ params.w0 + params.b0)
        return out, _Cache(t=t, x=x)
    rep, shared_cache = _stack_forward(params.shared, x, relu_last=True)
    idx0 = np.flatnonzero(t == 0.0)
    idx1 = np.flatnonzero(t == 1.0)
    out = np.empty(x.shape[0])
    out0, c0 = _stack_forward(params.head0, rep[idx0], relu_last=False)
    out1, c1 = _stack_forward(params.head1, rep[idx1], relu_last=False)
    out[idx0] = out0[:, 0]
    out[idx1] = out1[:, 0]
    cache = _Cache(t=t, x=x, idx0=idx0, idx1=idx1, shared_cache=shared_cache,
                   rep=rep, head_caches=(c0, c1))
    if isinstance(params, DragonnetParams):
        tw, tb = params.t_head
        cache.t_logit = (rep @ tw + tb)[:, 0]
    return out, cache


def backprop(params, cache: _Cache, d_out: np.ndarray, d_tlogit: Optional[np.ndarray] = None):
    """Exact gradients of sum_i d_out[i] * Q_raw_i (+ d_tlogit . t_logit).

    Returns a params object of the same type holding the gradients. Rows with
    t=0 contribute nothing to head1 and vice versa.
    """
    d_out = np.asarray(d_out, dtype=np.float64)
    if isinstance(params, Ols2Params):
        m0 = cache.t == 0.0
        m1 = cache.t == 1.0
        return Ols2Params(
            w0=cache.x[m0].T @ d_out[m0],
            b0=float(d_out[m0].sum()),
            w1=cache.x[m1].T @ d_out[m1],
            b1=float(d_out[m1].sum()),
        )
    c0, c1 = cache.head_caches
    g0, drep0 = _stack_backward(params.head0, c0, d_out[cache.idx0][:, None], relu_last=False)
    g1, drep1 = _stack_backward(params.head1, c1, d_out[cache.idx1][:, None], relu_last=False)
    drep = np.zeros_like(cache.rep)
    drep[cache.idx0] = drep0
    drep[cache.idx1] = drep1
    gt = None
    if isinstance(params, DragonnetParams):
        if d_tlogit is None:
            d_tlogit = np.zeros(cache.t.shape[0])
        tw, _ = params.t_head
        gt = (cache.rep.T @ d_tlogit[:, None], np.array([d_tlogit.sum()]))
        drep += d_tlogit[:, None] @ tw.T
    gshared, _ = _stack_backward(params.shared, cache.shared_cache, drep, relu_last=True)
    if gt is not None:
        return DragonnetParams(shared=gshared, head0=g0, head1=g1, t_head=gt)
    return TarnetParams(shared=gshared, head0=g0, head1=g1)


def forward(params, t: int, x: np.ndarray, loss: LossKind = LossKind.SQUARED) -> float:
    """Single-row prediction; probability scale under cross entropy."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out, _ = raw_outputs(params, np.full(x.shape[0], float(t)), x)
    val = float(out[0])
    if loss is LossKind.BINARY_CROSS_ENTROPY:
        val = float(sigmoid(np.array([val]))[0])
    return val


def both_arms(params, x: np.ndarray, loss: LossKind = LossKind.SQUARED):
    """(q0, q1) at x; one shared-representation evaluation for networks."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    single = x.ndim == 1
    xm = np.atleast_2d(x)
    n = xm.shape[0]
    both_x = np.vstack([xm, xm])
    both_t = np.concatenate([np.zeros(n), np.ones(n)])
    out, _ = raw_outputs(params, both_t, both_x)
    if loss is LossKind.BINARY_CROSS_ENTROPY:
        out = sigmoid(out)
    q0, q1 = out[:n], out[n:]
    if single:
        return float(q0[0]), float(q1[0])
    return q0, q1


# ---------------------------------------------------------------------------
# Losses and risks
# ---------------------------------------------------------------------------

def _check_binary_y(y: np.ndarray):
    if not np.all((y == 0.0) | (y == 1.0)):
        raise BinaryYRequired("cross-entropy loss requires a 0/1 outcome")


def loss_value(raw: np.ndarray, y: np.ndarray, loss: LossKind) -> float:
    """Mean loss over rows; probabilities clamped to [1e-7, 1-1e-7] before log."""
    if loss is LossKind.SQUARED:
        return float(np.mean((y - raw) ** 2))
    _check_binary_y(y)
    p = np.clip(sigmoid(raw), PROB_FLOOR, 1.0 - PROB_FLOOR)
    return float(np.mean(-y * np.log(p) - (1.0 - y) * np.log(1.0 - p)))


def loss_grad_raw(raw: np.ndarray, y: np.ndarray, loss: LossKind) -> np.ndarray:
    """Gradient of the mean loss with respect to the raw outputs."""
    n = raw.shape[0]
    if loss is LossKind.SQUARED:
        return 2.0 * (raw - y) / n
    _check_binary_y(y)
    return (sigmoid(raw) - y) / n


def risk(params, env: EnvData, loss: LossKind) -> float:
    """Empirical risk: mean loss over the environment's rows."""
    raw, _ = raw_outputs(params, env.t, env.x)
    return loss_value(raw, env.y, loss)


def grad_risk(params, env: EnvData, loss: LossKind):
    """Exact gradient of risk with respect to every parameter."""
    raw, cache = raw_outputs(params, env.t, env.x)
    return backprop(params, cache, loss_grad_raw(raw, env.y, loss))


def dragonnet_risk(params: DragonnetParams, env: EnvData, loss: LossKind, alpha_t: float = 1.0) -> float:
    """Outcome risk plus alpha_t times the treatment head's cross entropy."""
    if alpha_t < 0:
        raise ValueError("alpha_t must be >= 0")
    raw, cache = raw_outputs(params, env.t, env.x)
    return loss_value(raw, env.y, loss) + alpha_t * loss_value(
        cache.t_logit, env.t, LossKind.BINARY_CROSS_ENTROPY
    )
