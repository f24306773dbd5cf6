"""Confusion-matrix metrics: micro accuracy plus per-class one-vs-rest stats.

Metrics are derived from integer confusion counts and plain float
arithmetic, so independent oracles computing the same counts agree bit for
bit.  Macro averages are unweighted means over the class set; classes that
never occur in the truth are dropped from macro averaging with a warning
(two-class cohorts must work unchanged).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..domain import StagingLabel, normalize_label


class EmptyInput(ValueError):
    pass


AGE_BINS = ("<65", "65-74", "75-84", ">=85")


def age_bin(age: float) -> str:
    """Bin an age: lower bound inclusive, upper exclusive, except >=85."""
    if age < 65:
        return "<65"
    if age < 75:
        return "65-74"
    if age < 85:
        return "75-84"
    return ">=85"


@dataclass(frozen=True)
class LabeledPrediction:
    case_id: str
    truth: StagingLabel
    predicted: StagingLabel
    subgroups: dict[str, str] = field(default_factory=dict)  # e.g. race, age_bin
    cohort: str = ""

    @classmethod
    def from_json_dict(cls, data: dict) -> "LabeledPrediction":
        subgroups = dict(data.get("subgroups", {}))
        if "race" in data:
            subgroups["race"] = data["race"]
        if "age_bin" in data:
            subgroups["age_bin"] = data["age_bin"]
        elif "age" in data:
            subgroups["age_bin"] = age_bin(float(data["age"]))
        return cls(
            case_id=str(data.get("case_id", "")),
            truth=normalize_label(data["truth"]),
            predicted=normalize_label(data["predicted"]),
            subgroups=subgroups,
            cohort=str(data.get("cohort", "")),
        )


def load_predictions_jsonl(path: str) -> list[LabeledPrediction]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(LabeledPrediction.from_json_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: bad prediction line: {exc}") from exc
    return out


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    f1: float
    sensitivity: float
    specificity: float


@dataclass(frozen=True)
class MetricSet:
    micro_accuracy: float
    macro_f1: float
    macro_sensitivity: float
    macro_specificity: float
    per_class: dict[str, ClassMetrics]
    warnings: tuple[str, ...] = ()
    cis: dict[str, tuple[float, float]] = field(default_factory=dict)

    def value(self, name: str) -> float:
        return getattr(self, name)

    def to_json_dict(self) -> dict:
        out = {
            "micro_accuracy": self.micro_accuracy,
            "macro_f1": self.macro_f1,
            "macro_sensitivity": self.macro_sensitivity,
            "macro_specificity": self.macro_specificity,
            "per_class": {
                label: vars(m).copy() for label, m in self.per_class.items()
            },
            "warnings": list(self.warnings),
        }
        if self.cis:
            out["ci"] = {k: list(v) for k, v in self.cis.items()}
        return out


METRIC_NAMES = ("micro_accuracy", "macro_f1", "macro_sensitivity", "macro_specificity")


def _safe_div(num: float, den: float) -> float:
    # 0/0 -> 0.0 by convention (undefined per-class stats read as zero).
    return num / den if den else 0.0


def confusion_counts(
    truths: Sequence[StagingLabel],
    predictions: Sequence[StagingLabel],
    class_set: Sequence[StagingLabel],
) -> dict[StagingLabel, tuple[int, int, int, int]]:
    """One-vs-rest (TP, FP, FN, TN) per class."""
    counts = {}
    n = len(truths)
    for cls in class_set:
        tp = sum(1 for t, p in zip(truths, predictions) if t is cls and p is cls)
        fp = sum(1 for t, p in zip(truths, predictions) if t is not cls and p is cls)
        fn = sum(1 for t, p in zip(truths, predictions) if t is cls and p is not cls)
        counts[cls] = (tp, fp, fn, n - tp - fp - fn)
    return counts


def metrics_from_counts(
    n_correct: int,
    n_total: int,
    counts: dict[StagingLabel, tuple[int, int, int, int]],
    truth_present: set[StagingLabel],
) -> MetricSet:
    per_class: dict[str, ClassMetrics] = {}
    warnings: list[str] = []
    macro_f1 = macro_sens = macro_spec = 0.0
    macro_n = 0
    for cls, (tp, fp, fn, tn) in counts.items():
        precision = _safe_div(tp, tp + fp)
        sensitivity = _safe_div(tp, tp + fn)
        specificity = _safe_div(tn, tn + fp)
        f1 = _safe_div(2 * precision * sensitivity, precision + sensitivity)
        per_class[cls.value] = ClassMetrics(precision, f1, sensitivity, specificity)
        if cls in truth_present:
            macro_f1 += f1
            macro_sens += sensitivity
            macro_spec += specificity
            macro_n += 1
        else:
            warnings.append(
                f"class {cls.value} absent from truth; excluded from macro averages"
            )
    if macro_n == 0:
        raise EmptyInput("no class in the class set occurs in the truth labels")
    return MetricSet(
        micro_accuracy=_safe_div(n_correct, n_total),
        macro_f1=macro_f1 / macro_n,
        macro_sensitivity=macro_sens / macro_n,
        macro_specificity=macro_spec / macro_n,
        per_class=per_class,
        warnings=tuple(warnings),
    )


def compute_metrics(
    predictions: Sequence[LabeledPrediction],
    class_set: Optional[Sequence[StagingLabel]] = None,
) -> MetricSet:
    """Micro accuracy + per-class and macro one-vs-rest metrics.

    ``class_set`` defaults to the labels present in truth or prediction,
    in CN < MCI < AD order.
    """
    if not predictions:
        raise EmptyInput("no predictions")
    truths = [p.truth for p in predictions]
    preds = [p.predicted for p in predictions]
    if class_set is None:
        present = set(truths) | set(preds)
        class_set = [c for c in StagingLabel if c in present]
    counts = confusion_counts(truths, preds, class_set)
    n_correct = sum(1 for t, p in zip(truths, preds) if t is p)
    return metrics_from_counts(n_correct, len(truths), counts, set(truths))
