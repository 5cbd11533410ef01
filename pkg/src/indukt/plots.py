"""Matplotlib figure rendering for the CLI report paths.

Everything here takes already-computed data and writes a PNG next to the
delimited exports; no statistics are calculated in this module.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .analysis import ContingencyTable, module_accuracy_rows  # noqa: E402
from .harness import MetricsReport  # noqa: E402


def plot_acquisition_curve(
    report: MetricsReport, out_path, n_tasks: Optional[int] = None
) -> Path:
    """Line plot of mean tasks acquired per trial."""
    out_path = Path(out_path)
    trials = range(1, len(report.acquisition_curve) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(trials, report.acquisition_curve, marker="o", linewidth=1.5)
    ax.set_xlabel("trial")
    ax.set_ylabel("mean tasks acquired")
    ax.set_title(f"Acquisition ({report.acquisition_definition}, {report.n_runs} runs)")
    ax.set_xticks(list(trials))
    top = n_tasks if n_tasks is not None else report.n_tasks
    ax.set_ylim(0, top * 1.05 if top else None)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_accuracy_comparison(rows: Sequence[dict], out_path) -> Path:
    """Bar chart of mean test accuracy with std bars, one bar per system.

    ``rows`` are dicts with keys system/mean/std (std optional).
    """
    out_path = Path(out_path)
    labels = [row["system"] for row in rows]
    means = [row["mean"] for row in rows]
    stds = [row.get("std") or 0.0 for row in rows]
    fig, ax = plt.subplots(figsize=(max(6, 1.4 * len(rows)), 4))
    ax.bar(labels, means, yerr=stds, capsize=4, color="#4878a8")
    ax.set_ylabel("mean test accuracy")
    ax.set_ylim(0, 1.05)
    ax.grid(True, axis="y", alpha=0.3)
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_module_accuracy(table: ContingencyTable, out_path) -> Path:
    """Bar chart of the four per-module success rates."""
    out_path = Path(out_path)
    rows = module_accuracy_rows(table)
    labels = [row["module"] for row in rows]
    values = [row["accuracy"] for row in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(labels, values, color="#6a9f58")
    ax.bar_label(bars, fmt="%.3f")
    ax.set_ylabel("success rate")
    ax.set_ylim(0, 1.05)
    ax.grid(True, axis="y", alpha=0.3)
    plt.setp(ax.get_xticklabels(), rotation=15, ha="right")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_refinement_costs(costs: dict, out_path) -> Path:
    """Solved-vs-failed mean program versions, with the budget line."""
    out_path = Path(out_path)
    labels, values = [], []
    if costs.get("solved_mean_versions") is not None:
        labels.append(f"solved (n={costs['solved_n']})")
        values.append(costs["solved_mean_versions"])
    if costs.get("failed_mean_versions") is not None:
        labels.append(f"failed (n={costs['failed_n']})")
        values.append(costs["failed_mean_versions"])
    fig, ax = plt.subplots(figsize=(5, 4))
    if values:
        bars = ax.bar(labels, values, color=["#6a9f58", "#b1533f"][: len(values)])
        ax.bar_label(bars, fmt="%.1f")
    budget = costs.get("version_budget")
    if budget:
        ax.axhline(budget, linestyle="--", color="grey", linewidth=1)
        ax.annotate(f"budget {budget}", xy=(0.98, budget), xycoords=("axes fraction", "data"),
                    ha="right", va="bottom", fontsize=8, color="grey")
    ax.set_ylabel(f"mean program versions ({costs.get('split_by', '')})")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
