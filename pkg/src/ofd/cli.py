"""``ofd`` command line.

Exit codes: 0 success, 1 stage failure, 2 configuration error.
"""
from __future__ import annotations

import functools
import logging
import sys

import click

from . import pipeline
from .exceptions import ConfigError

EXIT_OK, EXIT_STAGE, EXIT_CONFIG = 0, 1, 2


def _common(f):
    @click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
                  help="JSON config file.")
    @click.option("--seed", type=int, default=None, help="Override the config seed.")
    @click.option("--out-dir", default="ofd_out", show_default=True, type=click.Path(file_okay=False),
                  help="Directory for stage artifacts.")
    @click.option("--workers", type=int, default=None, help="Worker processes for labeling.")
    @click.option("--stage-input", type=click.Path(dir_okay=False), default=None,
                  help="Primary input file of the stage (default: the file in --out-dir).")
    @functools.wraps(f)
    def wrapper(config, seed, out_dir, workers, stage_input, **kw):
        name = f.__name__.replace("_cmd", "").replace("_", "-")
        try:
            cfg = pipeline.load_config(config, {"seed": seed} if seed is not None else None)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        ctx = pipeline.Context(cfg, out_dir, workers)
        try:
            f(ctx, stage_input, **kw)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except Exception as exc:  # every stage failure maps to exit code 1
            click.echo(f"stage {name} failed: {type(exc).__name__}: {exc}", err=True)
            sys.exit(EXIT_STAGE)
    return wrapper


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Optimal flexibility design for aggregators of uncertain, non-convex loads."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("gen-data")
@_common
def gen_data_cmd(ctx, stage_input):
    """Sample and label a dataset of aggregate schedules."""
    D = pipeline.stage_gen_data(ctx)
    click.echo(f"dataset: {len(D)} points, feasible share {D.feasible_fraction():.3f}")


@main.command("label")
@_common
def label_cmd(ctx, stage_input):
    """Relabel a dataset at the configured eps and scenario count."""
    D = pipeline.stage_label(ctx, stage_input)
    click.echo(f"labeled {len(D)} points, feasible share {D.feasible_fraction():.3f}")


@main.command("train")
@_common
def train_cmd(ctx, stage_input):
    """Train the quadratic classifier."""
    clf = pipeline.stage_train(ctx, stage_input)
    r = clf.report_
    click.echo(f"train accuracy {r.train_accuracy:.4f}, validation {r.validation_accuracy:.4f}")


@main.command("approx")
@_common
def approx_cmd(ctx, stage_input):
    """Inner-approximate the ellipsoid by a polytope P_D."""
    P = pipeline.stage_approx(ctx, stage_input)
    click.echo(f"P_D: {P.n_rows} rows")


@main.command("design")
@_common
@click.option("--polytope", type=click.Path(dir_okay=False), default=None, help="P_D JSON file.")
@click.option("--dataset", type=click.Path(dir_okay=False), default=None, help="Dataset JSONL file.")
def design_cmd(ctx, stage_input, polytope, dataset):
    """Compute the prototype and the optimal market polytope.

    Given both ``--polytope`` and ``--dataset``, the evaluation stage runs too.
    """
    out = pipeline.stage_design(ctx, polytope or stage_input, dataset)
    for name, res in out.items():
        click.echo(f"{name}: beta {res.beta_star:.6g}")
    if polytope and dataset:
        rep = pipeline.stage_evaluate(ctx, dataset_path=dataset, polytope_path=polytope)
        for name, d in rep["designs"].items():
            v = d["volume"]
            click.echo(f"{name}: volume {v['estimate']:.6g} +/- {v['std_error']:.2g}")


@main.command("evaluate")
@_common
def evaluate_cmd(ctx, stage_input):
    """Volumes, containment and convexity metrics."""
    rep = pipeline.stage_evaluate(ctx, stage_input)
    for name, d in rep["designs"].items():
        v = d["volume"]
        click.echo(f"{name}: volume {v['estimate']:.6g} +/- {v['std_error']:.2g}")


@main.command("run")
@_common
def run_cmd(ctx, stage_input):
    """All stages from data generation to evaluation."""
    rep = pipeline.run_pipeline(ctx)
    for name, d in rep["designs"].items():
        v = d["volume"]
        click.echo(f"{name}: volume {v['estimate']:.6g} +/- {v['std_error']:.2g}")


@main.command("validate")
@_common
def validate_cmd(ctx, stage_input):
    """Re-check stored artifacts and write audit.json."""
    out = pipeline.audit(ctx)
    for c in out["checks"]:
        click.echo(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}")
    if not out["passed"]:
        sys.exit(EXIT_STAGE)


if __name__ == "__main__":
    main()
