"""Subgroup fairness dispersion: per-subgroup metrics, std, and max-min gap.

Dispersion std is the *population* standard deviation over the subgroup
values (the subgroups are the whole population of interest, not a sample);
the gap is max minus min over subgroups with at least one case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from ..domain import StagingLabel
from .metrics import LabeledPrediction, compute_metrics


class InsufficientSubgroups(ValueError):
    pass


@dataclass(frozen=True)
class SubgroupReport:
    axis: str
    metric: str
    per_subgroup: dict[str, float]
    counts: dict[str, int]
    dispersion_std: float
    dispersion_gap: float

    def to_json_dict(self) -> dict:
        return {
            "axis": self.axis,
            "metric": self.metric,
            "per_subgroup": dict(self.per_subgroup),
            "counts": dict(self.counts),
            "dispersion_std": self.dispersion_std,
            "dispersion_gap": self.dispersion_gap,
        }


def population_std(values: Sequence[float]) -> float:
    n = len(values)
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / n)


def dispersion_from_values(values: Sequence[float]) -> tuple[float, float]:
    """(population std, max-min gap) over subgroup metric values."""
    if len(values) < 2:
        raise InsufficientSubgroups("need at least 2 subgroup values")
    return population_std(values), max(values) - min(values)


def fairness_dispersion(
    predictions: Sequence[LabeledPrediction],
    axis: str,
    metric: str = "micro_accuracy",
    class_set: Optional[Sequence[StagingLabel]] = None,
) -> SubgroupReport:
    """Metric per subgroup along ``axis`` (e.g. "race", "age_bin") plus
    dispersion statistics."""
    groups: dict[str, list[LabeledPrediction]] = {}
    for p in predictions:
        key = p.subgroups.get(axis)
        if key:
            groups.setdefault(key, []).append(p)
    groups = {k: v for k, v in groups.items() if v}
    if len(groups) < 2:
        raise InsufficientSubgroups(
            f"axis {axis!r} has {len(groups)} non-empty subgroup(s); need >= 2"
        )
    per_subgroup = {
        key: compute_metrics(members, class_set=class_set).value(metric)
        for key, members in sorted(groups.items())
    }
    std, gap = dispersion_from_values(list(per_subgroup.values()))
    return SubgroupReport(
        axis=axis,
        metric=metric,
        per_subgroup=per_subgroup,
        counts={key: len(members) for key, members in sorted(groups.items())},
        dispersion_std=std,
        dispersion_gap=gap,
    )
