"""Command line entry points: experiment runs and theorem verifiers."""

from __future__ import annotations

import json
import sys

import click

from . import harness, theory
from .dgp import Graph
from .harness import Experiment, ExperimentSpec, Method, ModelKind


def _spec_from_options(experiment, config, seed, model, methods, replicates) -> ExperimentSpec:
    doc = {}
    if config is not None:
        with open(config) as fh:
            doc = json.load(fh)
    kwargs = dict(doc)
    kwargs["experiment"] = experiment
    if seed is not None:
        kwargs["base_seed"] = seed
    if model is not None:
        kwargs["model"] = model
    if methods:
        kwargs["methods"] = list(methods)
    if replicates is not None:
        kwargs["replicates"] = replicates
    if "methods" in kwargs:
        kwargs["methods"] = tuple(Method(m) for m in kwargs["methods"])
    if "model" in kwargs:
        kwargs["model"] = ModelKind(kwargs["model"])
    if "graphs" in kwargs:
        kwargs["graphs"] = tuple(Graph(g) for g in kwargs["graphs"])
    if "mixtures" in kwargs:
        kwargs["mixtures"] = tuple(tuple(m) for m in kwargs["mixtures"])
    if "collider_scales" in kwargs:
        kwargs["collider_scales"] = tuple(kwargs["collider_scales"])
    return ExperimentSpec(**kwargs)


_run_options = [
    click.option("--config", type=click.Path(exists=True), default=None,
                 help="JSON document mirroring the experiment spec."),
    click.option("--out", type=click.Path(), required=True),
    click.option("--seed", type=int, default=None),
    click.option("--model", type=click.Choice([m.value for m in ModelKind]), default=None),
    click.option("--methods", multiple=True,
                 type=click.Choice([m.value for m in Method])),
    click.option("--replicates", type=int, default=None),
]


def _with_run_options(fn):
    for opt in reversed(_run_options):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Nearly invariant causal estimation experiments and verifiers."""


@main.group()
def run():
    """Run an experiment and write result tables."""


@run.command("linear")
@_with_run_options
def run_linear(config, out, seed, model, methods, replicates):
    spec = _spec_from_options(Experiment.LINEAR1, config, seed, model, methods, replicates)
    table = harness.run_linear_experiment(spec)
    for path in harness.emit(table, out):
        click.echo(path)


@run.command("diversity")
@_with_run_options
def run_diversity(config, out, seed, model, methods, replicates):
    spec = _spec_from_options(Experiment.DIVERSITY3, config, seed, model, methods, replicates)
    table = harness.run_diversity_experiment(spec)
    for path in harness.emit(table, out):
        click.echo(path)


@run.command("csv")
@_with_run_options
@click.option("--data", type=click.Path(exists=True), default=None,
              help="CSV file; omit to use the shipped synthetic stand-in.")
@click.option("--treatment-col", default="t")
@click.option("--outcome-col", default="y")
@click.option("--env-col", default=None)
@click.option("--sort-col", default=None)
@click.option("--ite-col", default=None)
def run_csv(config, out, seed, model, methods, replicates,
            data, treatment_col, outcome_col, env_col, sort_col, ite_col):
    spec = _spec_from_options(Experiment.CSV_COLLIDER, config, seed, model, methods, replicates)
    dataset = None
    if data is not None:
        dataset = harness.load_csv_experiment_data(
            data, treatment_col, outcome_col,
            env_col=env_col, sort_col=sort_col, ite_col=ite_col,
        )
    table = harness.run_csv_collider_experiment(spec, dataset)
    for path in harness.emit(table, out):
        click.echo(path)


@main.group()
def verify():
    """Numerical theorem verifiers; exit code 2 on failure."""


@verify.command("collider")
@click.option("--trials", type=int, default=1000)
@click.option("--seed", type=int, default=0)
def verify_collider(trials, seed):
    report = theory.verify_collider_theorem(trials, seed)
    click.echo(json.dumps(report.to_json()))
    click.echo(f"checked={report.checked} skipped={report.skipped} "
               f"violations={len(report.violations)}")
    if not report.ok:
        sys.exit(2)


@verify.command("overlap")
@click.option("--config", type=click.Path(exists=True), default=None,
              help='JSON: {"kind": "randomized"|"confounded", "n": int, "bins": int, "seed": int}')
def verify_overlap(config):
    doc = {"kind": "confounded", "n": 100000, "bins": 20, "seed": 0}
    if config is not None:
        with open(config) as fh:
            doc.update(json.load(fh))
    env, scores = harness.overlap_fixture(doc["kind"], doc["n"], doc["seed"])
    report = theory.overlap_check(env, scores, bins=doc["bins"])
    click.echo(json.dumps(report.to_json()))
    click.echo("pass" if report.ok else "fail")
    if not report.ok:
        sys.exit(2)


if __name__ == "__main__":
    main()
