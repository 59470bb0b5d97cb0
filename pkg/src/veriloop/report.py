"""Regenerate comparison tables and figures from stored run directories.

A run directory is whatever `veriloop run` leaves behind: run_header.json
(config + overrides), metrics.jsonl, ledger.jsonl, state.json. Nothing is
re-executed here; the report is a pure view over those files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import MissingInputError


def load_run(run_dir: str | Path) -> dict:
    run_dir = Path(run_dir)
    header_path = run_dir / "run_header.json"
    metrics_path = run_dir / "metrics.jsonl"
    if not header_path.exists() or not metrics_path.exists():
        raise MissingInputError(f"{run_dir} is not a run directory (missing header or metrics)")
    with header_path.open("r", encoding="utf-8") as fh:
        header = json.load(fh)
    metrics = []
    with metrics_path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                metrics.append(json.loads(line))
    return {"dir": str(run_dir), "header": header, "metrics": metrics}


def discover_runs(root: str | Path) -> list[dict]:
    root = Path(root)
    if not root.exists():
        raise MissingInputError(f"runs directory not found: {root}")
    runs = []
    for candidate in sorted(root.iterdir()):
        if candidate.is_dir() and (candidate / "metrics.jsonl").exists():
            try:
                runs.append(load_run(candidate))
            except MissingInputError:
                continue
    if not runs:
        raise MissingInputError(f"no completed runs under {root}")
    return runs


def _pool_size(run: dict) -> int:
    return sum(entry.get("new_labeled", 0) for entry in run["metrics"]) + _remaining(run)


def _remaining(run: dict) -> int:
    state_path = Path(run["dir"]) / "state.json"
    if state_path.exists():
        with state_path.open("r", encoding="utf-8") as fh:
            return len(json.load(fh)["state"]["pool_remaining"])
    return 0


def strategy_rows(runs: list[dict]) -> list[dict]:
    """Per-round macro-F1 against the cumulative labelled fraction, per strategy."""
    rows = []
    for run in runs:
        config = run["header"]["config"]
        strategy = config["sampling"]["strategy"]
        seed = config["seed"]
        pool0 = _pool_size(run)
        labelled = 0
        for entry in run["metrics"]:
            labelled += entry.get("new_labeled", 0)
            rows.append(
                {
                    "strategy": strategy,
                    "seed": seed,
                    "round": entry["round"],
                    "labelled_frac": labelled / pool0 if pool0 else 0.0,
                    "macro_f1": entry["macro_f1"],
                }
            )
    rows.sort(key=lambda r: (r["strategy"], r["seed"], r["round"]))
    return rows


def dose_rows(runs: list[dict]) -> list[dict]:
    """Final macro-F1 and total cost against the human re-annotation fraction."""
    rows = []
    for run in runs:
        config = run["header"]["config"]
        if not run["metrics"]:
            continue
        final = run["metrics"][-1]
        rows.append(
            {
                "rho": config["annotator"]["rho"],
                "seed": config["seed"],
                "macro_f1": final["macro_f1"],
                "llm_usd": final["cost"]["llm_usd"],
                "human_usd": final["cost"]["human_usd"],
                "total_usd": final["cost"]["total_usd"],
            }
        )
    rows.sort(key=lambda r: (r["rho"], r["seed"]))
    return rows


def _write_rows(rows: list[dict], stem: Path) -> None:
    with (stem.with_suffix(".json")).open("w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
    if not rows:
        return
    with (stem.with_suffix(".csv")).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def render_strategy_figure(rows: list[dict], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    strategies = sorted({r["strategy"] for r in rows})
    for strategy in strategies:
        sub = [r for r in rows if r["strategy"] == strategy]
        by_round: dict[int, list] = {}
        for r in sub:
            by_round.setdefault(r["round"], []).append(r)
        xs, ys = [], []
        for rnd in sorted(by_round):
            pts = by_round[rnd]
            xs.append(sum(p["labelled_frac"] for p in pts) / len(pts))
            ys.append(sum(p["macro_f1"] for p in pts) / len(pts))
        ax.plot(xs, ys, marker="o", label=strategy)
    ax.set_xlabel("labelled fraction of pool")
    ax.set_ylabel("macro F1")
    ax.set_title("Sampling strategies")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_dose_figure(rows: list[dict], path: Path) -> None:
    fig, ax1 = plt.subplots(figsize=(7, 4.5))
    rhos = sorted({r["rho"] for r in rows})
    f1 = [sum(r["macro_f1"] for r in rows if r["rho"] == rho) / len([r for r in rows if r["rho"] == rho]) for rho in rhos]
    cost = [sum(r["total_usd"] for r in rows if r["rho"] == rho) / len([r for r in rows if r["rho"] == rho]) for rho in rhos]
    ax1.plot(rhos, f1, marker="o", color="tab:blue", label="macro F1")
    ax1.set_xlabel("human re-annotation fraction")
    ax1.set_ylabel("macro F1", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(rhos, cost, marker="s", color="tab:red", label="total USD")
    ax2.set_ylabel("total cost (USD)", color="tab:red")
    ax1.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def build_report(runs_root: str | Path, out_dir: str | Path) -> dict[str, str]:
    """Emit strategy and dose-response tables (CSV + JSON) and PNG figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = discover_runs(runs_root)
    s_rows = strategy_rows(runs)
    d_rows = dose_rows(runs)
    _write_rows(s_rows, out / "strategy_f1")
    _write_rows(d_rows, out / "dose_response")
    artifacts = {
        "strategy_csv": str(out / "strategy_f1.csv"),
        "strategy_json": str(out / "strategy_f1.json"),
        "dose_csv": str(out / "dose_response.csv"),
        "dose_json": str(out / "dose_response.json"),
    }
    if s_rows:
        render_strategy_figure(s_rows, out / "strategy_f1.png")
        artifacts["strategy_png"] = str(out / "strategy_f1.png")
    if d_rows:
        render_dose_figure(d_rows, out / "dose_response.png")
        artifacts["dose_png"] = str(out / "dose_response.png")
    return artifacts
