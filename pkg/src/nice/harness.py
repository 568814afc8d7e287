"""Experiment orchestration: linear suite, diversity sweep, CSV collider runs."""

from __future__ import annotations

import csv as csvmod
import enum
import json
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import estimators, icp
from .dataset import (
    EnvData,
    GroundTruth,
    MultiEnvDataset,
    load_multi_env_csv,
    random_orthogonal,
    scramble,
)
from .dgp import (
    Graph,
    MixtureSpec,
    augment_with_colliders,
    diversity,
    gen_linear_suite,
    gen_nonlinear_suite,
    mix_environments,
    sigmoid,
)
from .models import (
    LossKind,
    Ols2Params,
    init_dragonnet,
    init_ols2,
    init_tarnet,
)
from .objectives import Objective, TrainConfig, train

LINEAR_ENVS = (0.2, 2.0, 5.0)
DIVERSITY_ENVS = (0.2, 1.0, 5.0)

# The 14 mixture proportions of the diversity sweep.
DIVERSITY_MIXTURES = (
    (0.0, 0.0, 1.0), (0.0, 0.1, 0.9), (0.0, 0.2, 0.8), (0.0, 0.3, 0.7),
    (0.0, 0.4, 0.6), (0.0, 0.5, 0.5), (0.1, 0.1, 0.8), (0.1, 0.2, 0.7),
    (0.1, 0.3, 0.6), (0.1, 0.4, 0.5), (0.2, 0.2, 0.6), (0.2, 0.3, 0.5),
    (0.2, 0.4, 0.4), (0.3, 0.3, 0.4),
)


class Method(enum.Enum):
    ADJUST_ALL = "adjust_all"
    NICE = "nice"
    ICP = "icp"
    NO_ADJUST = "no_adjust"


class ModelKind(enum.Enum):
    OLS2 = "ols2"
    TARNET = "tarnet"
    DRAGONNET = "dragonnet"


class Experiment(enum.Enum):
    LINEAR1 = "linear"
    DIVERSITY3 = "diversity"
    CSV_COLLIDER = "csv"


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: Experiment
    methods: tuple[Method, ...] = (Method.ADJUST_ALL, Method.NICE)
    replicates: int = 10
    base_seed: int = 0
    model: ModelKind = ModelKind.OLS2
    scrambled: bool = False
    heteroskedastic: bool = True
    graphs: tuple[Graph, ...] = (Graph.NOISE, Graph.DESCENDANT, Graph.COLLIDER)
    n_per_env: Optional[int] = None
    mixtures: tuple[tuple[float, float, float], ...] = DIVERSITY_MIXTURES
    icp_alpha: float = 0.05
    collider_copies: int = 20
    collider_scales: tuple[float, ...] = (0.01, 0.2, 1.0)
    train_overrides: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")


COLUMNS = (
    "experiment", "variant", "graph", "method", "env", "replicate",
    "satt_hat", "satt_true", "mae", "pehe", "weight_error", "diversity",
)


@dataclass
class ResultTable:
    rows: list[dict] = field(default_factory=list)

    def append(self, **kwargs):
        row = {c: kwargs.get(c) for c in COLUMNS}
        self.rows.append(row)

    def extend(self, other: "ResultTable"):
        self.rows.extend(other.rows)


def _derive_seed(base_seed: int, *key: int) -> int:
    return int(np.random.SeedSequence((base_seed,) + key).generate_state(1)[0])


def _default_train(model: ModelKind, objective: Objective, loss: LossKind) -> TrainConfig:
    if model is ModelKind.OLS2:
        lam = 10.0
        epochs = 3000
        lr = 0.05
    else:
        lam = 100.0
        epochs = 1000
        lr = 0.001
    return TrainConfig(
        objective=objective,
        lam=lam if objective is Objective.IRMV1 else 0.0,
        loss=loss,
        learning_rate=lr,
        epochs=epochs,
    )


def _make_cfg(spec: ExperimentSpec, objective: Objective, loss: LossKind, seed: int) -> TrainConfig:
    cfg = _default_train(spec.model, objective, loss)
    cfg = replace(cfg, seed=seed, **spec.train_overrides)
    return cfg


def _init_model(spec: ExperimentSpec, d: int, seed: int):
    if spec.model is ModelKind.OLS2:
        return init_ols2(d)
    if spec.model is ModelKind.TARNET:
        return init_tarnet(d, seed)
    return init_dragonnet(d, seed)


def _fit(spec: ExperimentSpec, data: MultiEnvDataset, objective: Objective,
         loss: LossKind, seed: int):
    cfg = _make_cfg(spec, objective, loss, seed)
    init = _init_model(spec, data.d, seed)
    return train(init, data, cfg).params


def _weight_error(params, data: MultiEnvDataset) -> Optional[float]:
    """Mean squared weight on the non-causal block, in the unscrambled basis."""
    if not isinstance(params, Ols2Params):
        return None
    meta = data.meta or {}
    cols = meta.get("noncausal_cols")
    if cols is None:
        return None
    s = meta.get("scramble")
    if s is not None:
        # x_obs = x @ s, so the effective weight on the original covariates
        # is s @ w; measure the non-causal error in that basis.
        params = Ols2Params(w0=s @ params.w0, b0=params.b0, w1=s @ params.w1, b1=params.b1)
    return estimators.noncausal_weight_error(params, cols)


def _append_eval(table: ResultTable, report: estimators.EstimateReport, *,
                 experiment: str, variant: str, graph: Optional[str], method: str,
                 replicate: int, diversity_val: Optional[float] = None):
    for e in report.envs:
        table.append(
            experiment=experiment, variant=variant, graph=graph, method=method,
            env=e.env_id, replicate=replicate, satt_hat=e.satt_hat,
            satt_true=e.satt_true, mae=e.mae_satt, pehe=e.pehe,
            weight_error=report.weight_error, diversity=diversity_val,
        )


def _no_adjust_report(data: MultiEnvDataset) -> estimators.EstimateReport:
    envs = []
    for env in data.envs:
        treated = env.t == 1.0
        est = float(env.y[treated].mean() - env.y[~treated].mean())
        rec = estimators.EnvEstimate(env_id=env.env_id, satt_hat=est)
        if env.truth is not None:
            rec.satt_true = estimators.true_satt(env)
            rec.mae_satt = abs(est - rec.satt_true)
        envs.append(rec)
    report = estimators.EstimateReport(envs=envs)
    maes = [e.mae_satt for e in envs if e.mae_satt is not None]
    if maes:
        report.avg_mae = float(np.mean(maes))
    return report


def _zero_effect_report(data: MultiEnvDataset) -> estimators.EstimateReport:
    """When ICP selects nothing the estimated causal effect is exactly 0."""
    envs = []
    for env in data.envs:
        rec = estimators.EnvEstimate(env_id=env.env_id, satt_hat=0.0)
        if env.truth is not None:
            rec.satt_true = estimators.true_satt(env)
            rec.mae_satt = abs(rec.satt_true)
            rec.pehe = float(np.mean(env.truth.ite ** 2))
        envs.append(rec)
    report = estimators.EstimateReport(envs=envs)
    maes = [e.mae_satt for e in envs if e.mae_satt is not None]
    if maes:
        report.avg_mae = float(np.mean(maes))
    return report


# Stage codes for seed derivation: each (replicate, graph, method) gets its
# own stream so adding a method never perturbs another method's rows.
_STAGE_DATA = 0
_STAGE_SCRAMBLE = 1
_STAGE_METHOD = {
    Method.ADJUST_ALL: 10,
    Method.NICE: 11,
    Method.ICP: 12,
    Method.NO_ADJUST: 13,
}


def run_linear_experiment(spec: ExperimentSpec) -> ResultTable:
    """Linear three-graph comparison of the adjustment schemes."""
    assert spec.experiment is Experiment.LINEAR1
    n = spec.n_per_env or 1000
    variant = f"scrambled={spec.scrambled},hetero={spec.heteroskedastic}"
    table = ResultTable()
    loss = LossKind.SQUARED
    # Seed streams key on the canonical graph index so a subset run
    # reproduces the same rows as the full run.
    graph_index = {Graph.NOISE: 0, Graph.DESCENDANT: 1, Graph.COLLIDER: 2}
    for graph in spec.graphs:
        gi = graph_index[graph]
        for rep in range(spec.replicates):
            data = gen_linear_suite(
                graph, LINEAR_ENVS, n,
                seed=_derive_seed(spec.base_seed, rep, gi, _STAGE_DATA),
                heteroskedastic=spec.heteroskedastic,
            )
            if spec.scrambled:
                s = random_orthogonal(data.d, _derive_seed(spec.base_seed, rep, gi, _STAGE_SCRAMBLE))
                data = scramble(data, s)
            for method in spec.methods:
                seed = _derive_seed(spec.base_seed, rep, gi, _STAGE_METHOD[method])
                if method is Method.NO_ADJUST:
                    report = _no_adjust_report(data)
                elif method is Method.ICP:
                    result = icp.icp_select(data, icp.IcpConfig(alpha=spec.icp_alpha))
                    if not result.selection:
                        report = _zero_effect_report(data)
                    else:
                        sub = data.drop_columns(
                            [j for j in range(data.d) if j not in result.selection]
                        )
                        params = _fit(spec, sub, Objective.ERM, loss, seed)
                        report = estimators.evaluate(params, sub, loss)
                else:
                    objective = Objective.IRMV1 if method is Method.NICE else Objective.ERM
                    params = _fit(spec, data, objective, loss, seed)
                    report = estimators.evaluate(params, data, loss)
                    report.weight_error = _weight_error(params, data)
                _append_eval(
                    table, report, experiment="linear", variant=variant,
                    graph=graph.value, method=method.value, replicate=rep,
                )
    return table


def run_diversity_experiment(spec: ExperimentSpec) -> ResultTable:
    """Mixture sweep: NICE on the bad-control set vs ERM on the valid set."""
    assert spec.experiment is Experiment.DIVERSITY3
    n = spec.n_per_env or 900
    table = ResultTable()
    loss = LossKind.BINARY_CROSS_ENTROPY
    for rep in range(spec.replicates):
        sources = gen_nonlinear_suite(
            DIVERSITY_ENVS, n, seed=_derive_seed(spec.base_seed, rep, 0, _STAGE_DATA),
            include_z=True,
        )
        z_col = sources.meta["collider_col"]
        for mi, props in enumerate(spec.mixtures):
            mspec = MixtureSpec(props)
            mixed = mix_environments(
                sources, mspec, seed=_derive_seed(spec.base_seed, rep, mi + 1, _STAGE_DATA)
            )
            div = diversity(mspec)
            for method in spec.methods:
                if method not in (Method.NICE, Method.ADJUST_ALL):
                    continue
                seed = _derive_seed(spec.base_seed, rep, mi + 1, _STAGE_METHOD[method])
                if method is Method.NICE:
                    run_data = mixed
                    objective = Objective.IRMV1
                else:
                    run_data = mixed.drop_columns([z_col])
                    objective = Objective.ERM
                params = _fit(spec, run_data, objective, loss, seed)
                report = estimators.evaluate(params, run_data, loss)
                _append_eval(
                    table, report, experiment="diversity",
                    variant=f"mixture={props}", graph=None, method=method.value,
                    replicate=rep, diversity_val=div,
                )
    return table


def make_standin_dataset(seed: int = 0, n_per_env: int = 900) -> MultiEnvDataset:
    """Synthetic stand-in for the semi-synthetic CSV experiment: the nonlinear
    DGP without its collider column."""
    return gen_nonlinear_suite(DIVERSITY_ENVS, n_per_env, seed=seed, include_z=False)


def load_csv_experiment_data(
    path, treatment_col: str, outcome_col: str,
    env_col: Optional[str] = None, sort_col: Optional[str] = None,
    ite_col: Optional[str] = None,
) -> MultiEnvDataset:
    """CSV ingestion for the collider experiment.

    With env_col, rows are partitioned by its value. With sort_col instead,
    rows are sorted by that covariate's value and split into three equal
    environments (the sort column stays in the covariate set). An optional
    ite_col supplies unit-level ground-truth effects.
    """
    if (env_col is None) == (sort_col is None):
        raise ValueError("provide exactly one of env_col or sort_col")
    if env_col is not None:
        data = load_multi_env_csv(path, treatment_col, outcome_col, env_col)
        if ite_col is None:
            return data
        with open(path, newline="") as fh:
            header = next(csvmod.reader(fh))
        cov_names = [c for c in header if c not in (treatment_col, outcome_col, env_col)]
        j = cov_names.index(ite_col)
        envs = [_extract_ite(e, j) for e in data.envs]
        return MultiEnvDataset(tuple(envs))
    # sort_col path: synthesize a trivial env column, then resplit by sorting
    with open(path, newline="") as fh:
        header = next(csvmod.reader(fh))
    pooled = _load_pooled_csv(path, treatment_col, outcome_col)
    cov_names = [c for c in header if c not in (treatment_col, outcome_col)]
    x, t, y = pooled
    sort_values = x[:, cov_names.index(sort_col)]
    ite = None
    if ite_col is not None:
        j = cov_names.index(ite_col)
        ite = x[:, j]
        keep = [k for k in range(x.shape[1]) if k != j]
        x = x[:, keep]
    return split_by_sorted_column(x, t, y, sort_values, ite=ite)


def _extract_ite(e: EnvData, j: int) -> EnvData:
    keep = [k for k in range(e.d) if k != j]
    from .dataset import CovariateRole
    truth = GroundTruth(ite=e.x[:, j], roles=(CovariateRole.MIXED,) * len(keep))
    return EnvData(e.env_id, e.x[:, keep], e.t, e.y, truth)


def _load_pooled_csv(path, treatment_col: str, outcome_col: str):
    from .errors import MissingColumn, NonNumericCell
    with open(path, newline="") as fh:
        reader = csvmod.reader(fh)
        header = next(reader)
        rows = list(reader)
    for name in (treatment_col, outcome_col):
        if name not in header:
            raise MissingColumn(f"column {name!r} not found in header")
    cov_names = [c for c in header if c not in (treatment_col, outcome_col)]
    idx = {name: header.index(name) for name in header}

    def parse(i, col, raw):
        try:
            return float(raw)
        except ValueError:
            raise NonNumericCell(i, col) from None

    x = np.array([[parse(i, c, r[idx[c]]) for c in cov_names] for i, r in enumerate(rows)])
    t = np.array([parse(i, treatment_col, r[idx[treatment_col]]) for i, r in enumerate(rows)])
    y = np.array([parse(i, outcome_col, r[idx[outcome_col]]) for i, r in enumerate(rows)])
    return x, t, y


def split_by_sorted_column(
    x: np.ndarray, t: np.ndarray, y: np.ndarray, sort_values: np.ndarray,
    ite: Optional[np.ndarray] = None, n_envs: int = 3,
) -> MultiEnvDataset:
    """Sort rows by a covariate and split into equal-sized environments."""
    from .dataset import CovariateRole
    order = np.argsort(sort_values, kind="stable")
    parts = np.array_split(order, n_envs)
    envs = []
    for k, idx in enumerate(parts):
        truth = None
        if ite is not None:
            truth = GroundTruth(ite=ite[idx], roles=(CovariateRole.MIXED,) * x.shape[1])
        envs.append(EnvData(f"env{k + 1}", x[idx], t[idx], y[idx], truth))
    return MultiEnvDataset(tuple(envs))


def _bootstrap(data: MultiEnvDataset, seed: int) -> MultiEnvDataset:
    rng = np.random.default_rng(seed)
    envs = []
    for env in data.envs:
        idx = rng.integers(0, env.n, size=env.n)
        truth = env.truth
        if truth is not None:
            truth = GroundTruth(
                ite=truth.ite[idx], roles=truth.roles,
                propensity=truth.propensity[idx] if truth.propensity is not None else None,
            )
        envs.append(EnvData(env.env_id, env.x[idx], env.t[idx], env.y[idx], truth))
    return MultiEnvDataset(tuple(envs), meta=data.meta)


def run_csv_collider_experiment(
    spec: ExperimentSpec, data: Optional[MultiEnvDataset] = None
) -> ResultTable:
    """Bootstrap comparison of NICE vs adjust-all, with and without colliders."""
    assert spec.experiment is Experiment.CSV_COLLIDER
    if data is None:
        data = make_standin_dataset(seed=_derive_seed(spec.base_seed, 0, 0, _STAGE_DATA))
    if len(data.envs) != len(spec.collider_scales):
        raise ValueError("need one collider scale per environment")
    y_binary = all(np.all((e.y == 0.0) | (e.y == 1.0)) for e in data.envs)
    loss = LossKind.BINARY_CROSS_ENTROPY if y_binary else LossKind.SQUARED
    table = ResultTable()
    for rep in range(spec.replicates):
        boot = _bootstrap(data, _derive_seed(spec.base_seed, rep, 1, _STAGE_DATA))
        augmented = augment_with_colliders(
            boot, spec.collider_copies, spec.collider_scales,
            seed=_derive_seed(spec.base_seed, rep, 2, _STAGE_DATA),
        )
        for variant, vdata in (("plain", boot), ("augmented", augmented)):
            for method in spec.methods:
                if method not in (Method.NICE, Method.ADJUST_ALL):
                    continue
                seed = _derive_seed(spec.base_seed, rep, 3, _STAGE_METHOD[method])
                objective = Objective.IRMV1 if method is Method.NICE else Objective.ERM
                params = _fit(spec, vdata, objective, loss, seed)
                report = estimators.evaluate(params, vdata, loss)
                _append_eval(
                    table, report, experiment="csv", variant=variant,
                    graph=None, method=method.value, replicate=rep,
                )
    return table


# ---------------------------------------------------------------------------
# Summaries and output files
# ---------------------------------------------------------------------------

def summarize(table: ResultTable) -> dict:
    """Per (experiment, variant, graph, method): mean MAE with SE over replicates.

    Each replicate contributes its env-averaged MAE; SE is the sample SD of
    those replicate means divided by sqrt(#replicates), null for one replicate.
    """
    groups: dict[tuple, dict[int, list[float]]] = {}
    for row in table.rows:
        if row["mae"] is None:
            continue
        key = (row["experiment"], row["variant"], row["graph"], row["method"])
        groups.setdefault(key, {}).setdefault(row["replicate"], []).append(row["mae"])
    out = {}
    for key in sorted(groups, key=lambda k: tuple(str(v) for v in k)):
        rep_means = [float(np.mean(v)) for _, v in sorted(groups[key].items())]
        k = len(rep_means)
        entry = {
            "mean_mae": float(np.mean(rep_means)),
            "se_mae": float(np.std(rep_means, ddof=1) / np.sqrt(k)) if k > 1 else None,
            "replicates": k,
        }
        out["|".join(str(v) for v in key)] = entry
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit(table: ResultTable, out_dir) -> list[str]:
    """Write results.csv, summary.json, and plot-ready CSVs; returns file paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    results_path = os.path.join(out_dir, "results.csv")
    with open(results_path, "w", newline="") as fh:
        writer = csvmod.writer(fh)
        writer.writerow(COLUMNS)
        for row in table.rows:
            writer.writerow([_fmt(row[c]) for c in COLUMNS])
    written.append(results_path)

    summary = summarize(table)
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    written.append(summary_path)

    experiments = {row["experiment"] for row in table.rows}
    if "linear" in experiments:
        written.append(_emit_group_csv(
            summary, os.path.join(out_dir, "plotdata_mae.csv"), want="linear"))
        written.append(_emit_weight_csv(table, os.path.join(out_dir, "plotdata_weight_error.csv")))
    if "diversity" in experiments:
        written.append(_emit_diversity_csv(table, os.path.join(out_dir, "plotdata_diversity.csv")))
    if "csv" in experiments:
        written.append(_emit_group_csv(
            summary, os.path.join(out_dir, "plotdata_csv.csv"), want="csv"))
    return written


def _emit_group_csv(summary: dict, path: str, want: str) -> str:
    with open(path, "w", newline="") as fh:
        writer = csvmod.writer(fh)
        writer.writerow(["experiment", "variant", "graph", "method", "mean_mae", "se_mae"])
        for key, entry in summary.items():
            parts = key.split("|")
            if parts[0] != want:
                continue
            writer.writerow(parts + [_fmt(entry["mean_mae"]), _fmt(entry["se_mae"])])
    return path


def _emit_weight_csv(table: ResultTable, path: str) -> str:
    groups: dict[tuple, list[float]] = {}
    for row in table.rows:
        if row["weight_error"] is None:
            continue
        key = (row["graph"], row["method"])
        groups.setdefault(key, []).append(row["weight_error"])
    with open(path, "w", newline="") as fh:
        writer = csvmod.writer(fh)
        writer.writerow(["graph", "method", "mean_weight_error"])
        for key in sorted(groups):
            writer.writerow(list(key) + [_fmt(float(np.mean(groups[key])))])
    return path


def _emit_diversity_csv(table: ResultTable, path: str) -> str:
    groups: dict[tuple, list[float]] = {}
    for row in table.rows:
        if row["mae"] is None or row["diversity"] is None:
            continue
        key = (row["diversity"], row["method"])
        groups.setdefault(key, []).append(row["mae"])
    with open(path, "w", newline="") as fh:
        writer = csvmod.writer(fh)
        writer.writerow(["diversity", "method", "mean_mae"])
        for key in sorted(groups, key=lambda k: (k[0], k[1])):
            writer.writerow([_fmt(key[0]), key[1], _fmt(float(np.mean(groups[key])))])
    return path


def overlap_fixture(kind: str, n: int, seed: int):
    """Linear fixtures for the empirical overlap check.

    'randomized': propensity identically 0.5. 'confounded': propensity is the
    sigmoid of a linear confounder score. Returns (env, representation scores)
    where the scores are the treatment-informative linear score.
    """
    rng = np.random.default_rng(seed)
    d = 5
    x = rng.standard_normal((n, d))
    w_xt = rng.uniform(0.5, 1.5, size=d)
    w_xy = rng.uniform(0.5, 1.5, size=d)
    if kind == "randomized":
        propensity = np.full(n, 0.5)
    elif kind == "confounded":
        propensity = sigmoid(x @ w_xt)
    else:
        raise ValueError(f"unknown overlap fixture {kind!r}")
    t = (rng.uniform(size=n) < propensity).astype(np.float64)
    tau = 5.0 + rng.standard_normal(n)
    y = x @ w_xy + t * tau + rng.standard_normal(n)
    from .dataset import CovariateRole
    truth = GroundTruth(ite=tau, roles=(CovariateRole.CONFOUNDER,) * d, propensity=propensity)
    env = EnvData("overlap", x, t, y, truth)
    scores = x @ w_xt
    return env, scores
