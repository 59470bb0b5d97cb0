"""Command-line entry points: run experiments, sweep hyperparameters, score the
LLM-as-detector baseline, serve the annotation API, and export report figures.
"""

from __future__ import annotations

import itertools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import report as report_mod
from . import service as service_mod
from .annotator import Annotator, CostLedger, DemoSet, Demonstration, make_client
from .corpus import SplitSpec, split
from .encoder import make_encoder
from .errors import MissingInputError, VeriloopError
from .model import evaluate
from .pipeline import Pipeline, apply_overrides, load_config, load_corpus

EXIT_BAD_INPUT = 2
EXIT_FAILURE = 1


def _prepare_config(config_path: str, sets: tuple[str, ...], seed: int | None) -> dict:
    config = load_config(config_path)
    config = apply_overrides(config, list(sets))
    if seed is not None:
        config["seed"] = seed
    return config


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_BAD_INPUT if isinstance(exc, MissingInputError) else EXIT_FAILURE)


def _write_header(out_dir: Path, config: dict, overrides: tuple[str, ...]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "run_header.json").open("w", encoding="utf-8") as fh:
        json.dump({"config": config, "overrides": list(overrides)}, fh, indent=2, sort_keys=True)


@click.group()
def cli() -> None:
    """Active-learning loop for cross-domain news veracity."""


@cli.command("run")
@click.option("--config", "config_path", required=True, type=str, help="run config JSON")
@click.option("--set", "sets", multiple=True, help="override, e.g. --set sampling.strategy=random")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=str, default="runs/run")
def run_cmd(config_path: str, sets: tuple[str, ...], seed: int | None, out_dir: str) -> None:
    """Execute rounds until the stop rule fires; writes state and metrics."""
    try:
        config = _prepare_config(config_path, sets, seed)
        out = Path(out_dir)
        _write_header(out, config, sets)
        if sets:
            click.echo(f"overrides: {', '.join(sets)}")
        pipe = Pipeline(config, out_dir=out)
        pipe.run()
    except VeriloopError as exc:
        _fail(exc)
        return
    for entry in pipe.metrics:
        click.echo(
            f"round {entry['round']}: macro_f1={entry['macro_f1']:.4f} "
            f"cost=${entry['cost']['total_usd']:.2f} flagged={entry['flagged']} "
            f"human={entry['human_labeled']}"
        )
    if pipe.status == "awaiting_human":
        click.echo("run is awaiting human labels; start `veriloop serve` to continue")
    else:
        click.echo(f"done: {pipe.stop_reason} after {pipe.round} rounds -> {out / 'state.json'}")


@cli.command("sweep")
@click.option("--config", "config_path", required=True, type=str)
@click.option("--grid", "grids", multiple=True, required=True, help="e.g. --grid model.d=32,64")
@click.option("--set", "sets", multiple=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=str, default="runs/sweep")
def sweep_cmd(config_path: str, grids: tuple[str, ...], sets: tuple[str, ...], seed: int | None, out_dir: str) -> None:
    """One run per grid point; emits a sorted CSV/JSON table of macro-F1."""
    try:
        base = _prepare_config(config_path, sets, seed)
        axes = []
        for grid in grids:
            if "=" not in grid:
                raise VeriloopError(f"grid {grid!r} must look like key=v1,v2")
            key, raw = grid.split("=", 1)
            values = [v for v in raw.split(",") if v != ""]
            if not values:
                raise VeriloopError(f"grid {grid!r} has no values")
            axes.append([(key, v) for v in values])
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = []
        for i, point in enumerate(itertools.product(*axes)):
            overrides = [f"{k}={v}" for k, v in point]
            config = apply_overrides(base, overrides)
            setting = ",".join(overrides)
            point_dir = out / f"point_{i:03d}"
            _write_header(point_dir, config, tuple(overrides))
            pipe = Pipeline(config, out_dir=point_dir)
            pipe.run()
            final = pipe.metrics[-1] if pipe.metrics else {"macro_f1": None}
            rows.append({"setting": setting, "macro_f1": final["macro_f1"], "dir": str(point_dir)})
        rows.sort(key=lambda r: r["setting"])
        with (out / "sweep.json").open("w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
        import csv as _csv

        with (out / "sweep.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = _csv.DictWriter(fh, fieldnames=["setting", "macro_f1", "dir"])
            writer.writeheader()
            writer.writerows(rows)
    except VeriloopError as exc:
        _fail(exc)
        return
    for row in rows:
        click.echo(f"{row['setting']}: macro_f1={row['macro_f1']}")


@cli.command("eval-llm")
@click.option("--config", "config_path", required=True, type=str)
@click.option("--set", "sets", multiple=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=str, default="runs/eval_llm")
def eval_llm_cmd(config_path: str, sets: tuple[str, ...], seed: int | None, out_dir: str) -> None:
    """Score the LLM directly as a detector on the test split, both prompt modes."""
    try:
        config = _prepare_config(config_path, sets, seed)
        results = eval_llm(config)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "eval_llm.json").open("w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)
    except VeriloopError as exc:
        _fail(exc)
        return
    for mode in ("plain", "knn"):
        click.echo(f"{mode}: macro_f1={results[mode]['macro_f1']:.4f}")


def eval_llm(config: dict) -> dict:
    """Detector-mode evaluation used by the CLI and the acceptance suite."""
    records = load_corpus(config)
    parts = split(
        records,
        SplitSpec(
            demo_per_source=config["split"]["demo_per_source"],
            pool_frac=config["split"]["pool_frac"],
            seed=config["seed"],
        ),
    )
    encoder = make_encoder(config["encoder"])
    demo_set = DemoSet(
        encoder,
        [Demonstration(text=r.text, label=r.gold_label) for r in parts.demo if r.gold_label is not None],
    )
    test = [r for r in parts.test if r.gold_label is not None]
    if not test:
        raise VeriloopError("eval-llm needs gold labels on the test split")
    results: dict = {}
    for mode in ("plain", "knn"):
        ledger = CostLedger()
        detector = Annotator(
            encoder=encoder,
            client=make_client(config["annotator"]),
            ledger=ledger,
            mode=mode,
            k=config["annotator"]["k"],
        )
        preds = []
        for record in test:
            ann = detector.detect(record, demo_set)
            preds.append(0.5 if ann.label is None else float(ann.label))
        metrics = evaluate(
            np.asarray([r.gold_label for r in test]), np.asarray(preds), [r.source for r in test]
        )
        results[mode] = {
            "per_source": metrics["per_source"],
            "macro_f1": metrics["macro_f1"],
            "cost": ledger.cost(),
        }
    return results


@cli.command("serve")
@click.option("--config", "config_path", required=True, type=str)
@click.option("--set", "sets", multiple=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=str, default="runs/serve")
@click.option("--resume", "resume_path", type=str, default=None, help="state.json to resume")
@click.option("--host", type=str, default="127.0.0.1")
@click.option("--port", type=int, default=8008)
@click.option("--run-id", type=str, default="run1")
def serve_cmd(
    config_path: str,
    sets: tuple[str, ...],
    seed: int | None,
    out_dir: str,
    resume_path: str | None,
    host: str,
    port: int,
    run_id: str,
) -> None:
    """Expose the human-annotation queue and run telemetry over HTTP."""
    try:
        config = _prepare_config(config_path, sets, seed)
        out = Path(out_dir)
        _write_header(out, config, sets)
        if resume_path:
            pipe = Pipeline.load_state(resume_path, config, out_dir=out)
        else:
            pipe = Pipeline(config, out_dir=out)
    except VeriloopError as exc:
        _fail(exc)
        return
    click.echo(f"serving run {run_id!r} on http://{host}:{port}")
    service_mod.serve(pipe, run_id=run_id, host=host, port=port)


@cli.command("report")
@click.option("--runs", "runs_root", required=True, type=str, help="directory of run directories")
@click.option("--out", "out_dir", type=str, default="report")
def report_cmd(runs_root: str, out_dir: str) -> None:
    """Rebuild strategy and dose-response tables + figures from stored runs."""
    try:
        artifacts = report_mod.build_report(runs_root, out_dir)
    except VeriloopError as exc:
        _fail(exc)
        return
    for name, path in sorted(artifacts.items()):
        click.echo(f"{name}: {path}")


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
