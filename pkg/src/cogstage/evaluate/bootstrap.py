"""Non-parametric bootstrap confidence intervals for classification metrics.

Percentile method: resample cases with replacement (same size as the
original), recompute the metric per resample, and take the 2.5th / 97.5th
order statistics of the resampled values.  The random stream is partitioned
into per-resample sub-seeds spawned from the master seed, so results are
bit-identical regardless of evaluation order (and safely parallelizable).

Resampled metrics are evaluated from integer confusion counts (labels are
encoded once, counts come from a bincount per resample) through the same
float expressions as :func:`~cogstage.evaluate.metrics.compute_metrics`, so
a resample's metric equals what compute_metrics would return for the same
case multiset, bit for bit.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..domain import StagingLabel
from .metrics import (
    EmptyInput,
    LabeledPrediction,
    METRIC_NAMES,
    MetricSet,
    metrics_from_counts,
)

DEFAULT_RESAMPLES = 2000


def _order_statistic_interval(values: Sequence[float], alpha: float) -> tuple[float, float]:
    ordered = sorted(values)
    n = len(ordered)
    lo_index = min(n - 1, int(np.floor(alpha / 2 * n)))
    hi_index = max(0, int(np.ceil((1 - alpha / 2) * n)) - 1)
    return ordered[lo_index], ordered[hi_index]


def _encode(
    predictions: Sequence[LabeledPrediction],
    class_set: Optional[Sequence[StagingLabel]],
) -> tuple[np.ndarray, np.ndarray, list[StagingLabel]]:
    if class_set is None:
        present = {p.truth for p in predictions} | {p.predicted for p in predictions}
        class_set = [c for c in StagingLabel if c in present]
    classes = list(class_set)
    index = {c: i for i, c in enumerate(classes)}
    truths = np.array([index[p.truth] for p in predictions], dtype=np.int64)
    preds = np.array([index[p.predicted] for p in predictions], dtype=np.int64)
    return truths, preds, classes


def _metric_for_indices(
    truths: np.ndarray,
    preds: np.ndarray,
    classes: list[StagingLabel],
    indices: np.ndarray,
    metric: str,
) -> float:
    t = truths[indices]
    p = preds[indices]
    k = len(classes)
    n = len(indices)
    confusion = np.bincount(t * k + p, minlength=k * k).reshape(k, k)
    row = confusion.sum(axis=1)
    col = confusion.sum(axis=0)
    counts = {}
    truth_present = set()
    for i, cls in enumerate(classes):
        tp = int(confusion[i, i])
        fp = int(col[i]) - tp
        fn = int(row[i]) - tp
        counts[cls] = (tp, fp, fn, n - tp - fp - fn)
        if row[i] > 0:
            truth_present.add(cls)
    n_correct = int(np.trace(confusion))
    return metrics_from_counts(n_correct, n, counts, truth_present).value(metric)


def _resampled_metrics(
    predictions: Sequence[LabeledPrediction],
    metric: str,
    n_resamples: int,
    seed: int,
    class_set: Optional[Sequence[StagingLabel]],
) -> list[float]:
    if not predictions:
        raise EmptyInput("no predictions")
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    if metric not in METRIC_NAMES:
        raise ValueError(f"unknown metric {metric!r}; choose from {METRIC_NAMES}")
    truths, preds, classes = _encode(predictions, class_set)
    n = len(predictions)
    stats = []
    for child in np.random.SeedSequence(seed).spawn(n_resamples):
        rng = np.random.default_rng(child)
        indices = rng.integers(0, n, size=n)
        stats.append(_metric_for_indices(truths, preds, classes, indices, metric))
    return stats


def bootstrap_ci(
    predictions: Sequence[LabeledPrediction],
    metric: str,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
    alpha: float = 0.05,
    class_set: Optional[Sequence[StagingLabel]] = None,
) -> tuple[float, float]:
    """Percentile bootstrap interval for one named metric.

    Deterministic for a fixed seed; bounds are order statistics of the
    resampled metric values, so low <= high always holds.
    """
    stats = _resampled_metrics(predictions, metric, n_resamples, seed, class_set)
    return _order_statistic_interval(stats, alpha)


def bootstrap_standard_error(
    predictions: Sequence[LabeledPrediction],
    metric: str,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
    class_set: Optional[Sequence[StagingLabel]] = None,
) -> float:
    """Bootstrap standard error: std of the resampled metric values."""
    stats = _resampled_metrics(predictions, metric, n_resamples, seed, class_set)
    return float(np.std(stats))
