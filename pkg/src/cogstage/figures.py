"""Matplotlib figure rendering for the report paths.

Every CLI report command writes its figures next to the delimited output;
the case pipeline renders the genetic risk curve as a report attachment.
Uses the Agg backend throughout: no display required.
"""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluate.costs import BackboneCostRow, frontier_rows  # noqa: E402
from .evaluate.fairness import SubgroupReport  # noqa: E402
from .evaluate.readers import ReaderGroupStats  # noqa: E402


def save_risk_curve_figure(risk_curve: Sequence[dict], path: str,
                           title: str = "Age-specific risk") -> str:
    """Plot an annualized-risk curve with its confidence band."""
    ages = [p["age"] for p in risk_curve]
    risks = [p["risk"] for p in risk_curve]
    lows = [p.get("low", r) for p, r in zip(risk_curve, risks)]
    highs = [p.get("high", r) for p, r in zip(risk_curve, risks)]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(ages, lows, highs, alpha=0.25, label="95% band")
    ax.plot(ages, risks, marker="o", label="risk")
    ax.set_xlabel("Age (years)")
    ax.set_ylabel("Annualized risk")
    ax.set_ylim(0, max(0.05, max(highs) * 1.15))
    ax.set_title(title)
    ax.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_cost_accuracy_figure(rows: Sequence[BackboneCostRow], path: str) -> str:
    """Scatter of overall cost vs accuracy with the Pareto frontier dashed."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    costs = [float(r.overall_cost) for r in rows]
    accs = [r.accuracy for r in rows]
    sizes = [60 + 14 * abs(r.improvement_ratio) for r in rows]
    ax.scatter(costs, accs, s=sizes, alpha=0.75)
    for r in rows:
        ax.annotate(r.model, (float(r.overall_cost), r.accuracy),
                    textcoords="offset points", xytext=(5, 4), fontsize=7)
    frontier = frontier_rows(rows)
    ax.plot([float(r.overall_cost) for r in frontier],
            [r.accuracy for r in frontier],
            linestyle="--", color="tab:gray", label="Pareto frontier")
    ax.set_xlabel("Overall cost (USD)")
    ax.set_ylabel("Accuracy (%)")
    ax.set_title("Backbone cost vs accuracy")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_fairness_figure(reports: Sequence[SubgroupReport], path: str) -> str:
    """Per-subgroup bars with std / max-min gap annotated per metric."""
    fig, axes = plt.subplots(1, len(reports), figsize=(5.5 * len(reports), 4),
                             squeeze=False)
    for ax, report in zip(axes[0], reports):
        names = list(report.per_subgroup)
        values = [report.per_subgroup[n] for n in names]
        ax.bar(names, values, color="tab:blue", alpha=0.8)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel(report.metric)
        ax.set_title(
            f"{report.axis}: std={report.dispersion_std:.4f}, "
            f"gap={report.dispersion_gap:.4f}"
        )
        ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_reader_study_figure(stats: dict[str, ReaderGroupStats], path: str,
                             metric: str = "micro_accuracy") -> str:
    """Grouped unaided vs assisted bars with the median speedup annotated."""
    groups = [g for g in stats if g != "overall"]
    unaided = [stats[g].unaided[metric] for g in groups]
    assisted = [stats[g].assisted[metric] for g in groups]
    x = range(len(groups))

    fig, ax = plt.subplots(figsize=(1.6 * len(groups) + 3, 4.2))
    width = 0.38
    ax.bar([i - width / 2 for i in x], unaided, width, label="unaided")
    ax.bar([i + width / 2 for i in x], assisted, width, label="assisted")
    for i, g in enumerate(groups):
        ax.annotate(f"x{stats[g].median_speedup:.2f}",
                    (i, max(unaided[i], assisted[i]) + 0.02),
                    ha="center", fontsize=8)
    ax.set_xticks(list(x))
    ax.set_xticklabels(groups, rotation=15, ha="right", fontsize=8)
    ax.set_ylabel(metric)
    ax.set_ylim(0, 1.1)
    ax.set_title("Reader performance and median speedup")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
