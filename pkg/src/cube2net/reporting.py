"""Aggregate finished runs into a delimited summary and rendered figures.

The pipeline itself only writes machine-readable files; this consumer
path reads any number of run directories, lines their metrics up in one
TSV, and renders comparison figures next to it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import ConfigError

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = (
    "run",
    "method",
    "seed",
    "q",
    "node_count",
    "edge_count",
    "eval_count",
    "construction_s",
    "training_s",
)


@dataclass
class RunSummary:
    run: str
    metrics: dict
    timings: dict = field(default_factory=dict)
    train_report: dict | None = None


@dataclass
class ReportPaths:
    summary: str
    figures: list[str]


def collect_runs(run_dirs: Sequence[str]) -> list[RunSummary]:
    """Read metrics (required), timings, and training curves per run."""
    if not run_dirs:
        raise ConfigError("no run directories given")
    summaries: list[RunSummary] = []
    for run_dir in run_dirs:
        root = Path(run_dir)
        metrics_path = root / "metrics.json"
        if not metrics_path.is_file():
            raise ConfigError(f"{run_dir}: no metrics.json; not a finished run")
        with open(metrics_path, "r", encoding="utf-8") as fh:
            metrics = json.load(fh)
        summary = RunSummary(run=root.name or str(root), metrics=metrics)
        timings_path = root / "timings.json"
        if timings_path.is_file():
            with open(timings_path, "r", encoding="utf-8") as fh:
                summary.timings = json.load(fh)
        train_path = root / "train_report.json"
        if train_path.is_file():
            with open(train_path, "r", encoding="utf-8") as fh:
                summary.train_report = json.load(fh)
        summaries.append(summary)
    return summaries


def write_summary(summaries: Sequence[RunSummary], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(SUMMARY_COLUMNS) + "\n")
        for s in summaries:
            row = [
                s.run,
                str(s.metrics.get("method", "")),
                str(s.metrics.get("seed", "")),
                f"{s.metrics.get('q', float('nan')):.6f}",
                str(s.metrics.get("node_count", "")),
                str(s.metrics.get("edge_count", "")),
                str(s.metrics.get("eval_count", "")),
                f"{s.timings.get('construction_s', float('nan')):.4f}",
                f"{s.timings.get('training_s', float('nan')):.4f}",
            ]
            fh.write("\t".join(row) + "\n")


def _run_labels(summaries: Sequence[RunSummary]) -> list[str]:
    labels = [f"{s.metrics.get('method', '?')}\n{s.run}" for s in summaries]
    return labels


def render_quality_figure(summaries: Sequence[RunSummary], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(summaries), 3.2))
    qs = [s.metrics.get("q", 0.0) for s in summaries]
    ax.bar(range(len(summaries)), qs, color="#4878a8")
    ax.set_xticks(range(len(summaries)))
    ax.set_xticklabels(_run_labels(summaries), fontsize=7)
    ax.set_ylabel("selection quality q")
    ax.set_ylim(0.0, 1.05)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_size_figure(summaries: Sequence[RunSummary], path: Path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(2.4 + 1.6 * len(summaries), 3.2))
    for ax, key, label in zip(axes, ("node_count", "edge_count"), ("nodes", "edges")):
        ax.bar(
            range(len(summaries)),
            [s.metrics.get(key, 0) for s in summaries],
            color="#6a9a58",
        )
        ax.set_xticks(range(len(summaries)))
        ax.set_xticklabels(_run_labels(summaries), fontsize=7)
        ax.set_ylabel(label)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_training_figure(summaries: Sequence[RunSummary], path: Path) -> bool:
    """Quality-per-iteration curves; skipped when no run trained anything."""
    trained = [s for s in summaries if s.train_report]
    if not trained:
        return False
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    for s in trained:
        iters = s.train_report["iterations"]
        xs = [row["iteration"] for row in iters]
        ax.plot(xs, [row["mean_q"] for row in iters], label=f"{s.run} mean")
        ax.plot(
            xs,
            [row["max_q"] for row in iters],
            linestyle="--",
            label=f"{s.run} max",
        )
    ax.set_xlabel("iteration")
    ax.set_ylabel("trajectory quality")
    ax.legend(fontsize=7)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return True


def generate_report(run_dirs: Sequence[str], out_dir: str) -> ReportPaths:
    """Write summary.tsv plus quality, size, and training figures."""
    summaries = collect_runs(run_dirs)
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    summary_path = root / "summary.tsv"
    write_summary(summaries, summary_path)
    figures: list[str] = []
    quality_path = root / "quality.png"
    render_quality_figure(summaries, quality_path)
    figures.append(str(quality_path))
    size_path = root / "network_size.png"
    render_size_figure(summaries, size_path)
    figures.append(str(size_path))
    training_path = root / "training_curve.png"
    if render_training_figure(summaries, training_path):
        figures.append(str(training_path))
    logger.info("report: %s and %d figures", summary_path, len(figures))
    return ReportPaths(summary=str(summary_path), figures=figures)
