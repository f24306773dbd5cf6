"""Backbone cost-effectiveness validation and the cost-accuracy Pareto frontier.

Each row ties a backbone model to its engine accuracy, the raw (unassisted)
model accuracy, and per-case / overall USD costs.  Validation re-derives
the published arithmetic: overall cost from avg x n_cases (tolerance $0.02)
and the relative improvement ratio from (accuracy - raw) / raw x 100
(tolerance 0.02 points).  Inconsistencies are report entries, not errors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from decimal import Decimal
from typing import Optional, Sequence


@dataclass(frozen=True)
class BackboneCostRow:
    model: str
    provider: str
    accuracy: float  # engine accuracy, percent
    raw_accuracy: float  # standalone model accuracy, percent
    improvement_ratio: float  # published relative ratio, percent
    avg_cost_per_case: Decimal  # USD
    overall_cost: Decimal  # USD
    avg_input_tokens: float = 0.0
    avg_output_tokens: float = 0.0

    @property
    def delta_accuracy(self) -> float:
        return self.accuracy - self.raw_accuracy

    def computed_ratio(self) -> float:
        return self.delta_accuracy / self.raw_accuracy * 100.0


COST_CSV_HEADER = [
    "model", "provider", "accuracy", "raw_accuracy", "improvement_ratio",
    "avg_input_tokens", "avg_output_tokens", "avg_cost_per_case", "overall_cost",
]


def load_cost_rows_csv(path: str) -> list[BackboneCostRow]:
    rows = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(COST_CSV_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"cost CSV missing columns: {sorted(missing)}")
        for row in reader:
            rows.append(BackboneCostRow(
                model=row["model"],
                provider=row["provider"],
                accuracy=float(row["accuracy"]),
                raw_accuracy=float(row["raw_accuracy"]),
                improvement_ratio=float(row["improvement_ratio"]),
                avg_cost_per_case=Decimal(row["avg_cost_per_case"]),
                overall_cost=Decimal(row["overall_cost"]),
                avg_input_tokens=float(row.get("avg_input_tokens") or 0),
                avg_output_tokens=float(row.get("avg_output_tokens") or 0),
            ))
    return rows


@dataclass(frozen=True)
class CostReport:
    rows: tuple[BackboneCostRow, ...]  # sorted by cost
    n_cases: int
    inconsistencies: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "n_cases": self.n_cases,
            "rows": [
                {
                    "model": r.model,
                    "provider": r.provider,
                    "accuracy": r.accuracy,
                    "raw_accuracy": r.raw_accuracy,
                    "delta_accuracy": r.delta_accuracy,
                    "improvement_ratio": r.improvement_ratio,
                    "avg_cost_per_case": str(r.avg_cost_per_case),
                    "overall_cost": str(r.overall_cost),
                }
                for r in self.rows
            ],
            "inconsistencies": list(self.inconsistencies),
        }


OVERALL_COST_TOLERANCE = Decimal("0.02")
RATIO_TOLERANCE = 0.02


def cost_effectiveness(rows: Sequence[BackboneCostRow], n_cases: int) -> CostReport:
    """Validate each row's internal arithmetic; emit the table sorted by cost."""
    if n_cases < 1:
        raise ValueError("n_cases must be >= 1")
    inconsistencies: list[str] = []
    for row in rows:
        derived_overall = row.avg_cost_per_case * n_cases
        if abs(derived_overall - row.overall_cost) > OVERALL_COST_TOLERANCE:
            inconsistencies.append(
                f"{row.model}: avg {row.avg_cost_per_case} x {n_cases} = "
                f"{derived_overall:.2f} differs from overall {row.overall_cost}"
            )
        ratio = row.computed_ratio()
        if abs(ratio - row.improvement_ratio) > RATIO_TOLERANCE:
            inconsistencies.append(
                f"{row.model}: delta {row.delta_accuracy:.2f} over raw "
                f"{row.raw_accuracy:.2f} gives {ratio:.2f}%, published "
                f"{row.improvement_ratio:.2f}%"
            )
    ordered = tuple(sorted(rows, key=lambda r: (r.overall_cost, r.model)))
    return CostReport(rows=ordered, n_cases=n_cases,
                      inconsistencies=tuple(inconsistencies))


def pareto_frontier(
    points: Sequence[tuple[float, float]]
) -> list[tuple[float, float]]:
    """Non-dominated subset of (cost, accuracy) points, sorted by cost.

    A point is dominated when some other point has cost <= and accuracy >=
    with at least one strict; ties (identical points) are all kept since
    neither strictly dominates the other.
    """
    if not points:
        raise ValueError("no points")
    kept = []
    for p in points:
        dominated = any(
            q[0] <= p[0] and q[1] >= p[1] and (q[0] < p[0] or q[1] > p[1])
            for q in points
        )
        if not dominated:
            kept.append(p)
    return sorted(kept)


def frontier_rows(rows: Sequence[BackboneCostRow]) -> list[BackboneCostRow]:
    """The cost rows on the (overall cost, accuracy) Pareto frontier."""
    frontier = set(pareto_frontier([(float(r.overall_cost), r.accuracy) for r in rows]))
    return sorted(
        (r for r in rows if (float(r.overall_cost), r.accuracy) in frontier),
        key=lambda r: r.overall_cost,
    )


def cost_markdown_table(report: CostReport) -> str:
    lines = [
        "| Model | Provider | Accuracy (%) | dAcc vs raw (ratio %) | Avg cost/case (USD) | Overall (USD) |",
        "| --- | --- | --- | --- | --- | --- |",
    ]
    for r in report.rows:
        lines.append(
            f"| {r.model} | {r.provider} | {r.accuracy:.2f} | "
            f"+{r.delta_accuracy:.2f} ({r.improvement_ratio:.2f}) | "
            f"{r.avg_cost_per_case:.6f} | {r.overall_cost:.2f} |"
        )
    return "\n".join(lines) + "\n"
