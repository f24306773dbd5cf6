"""Reader-study arithmetic: paired unaided vs assisted reads per clinician.

Improvement ratio = (assisted - unaided) / unaided x 100 for each
performance metric; speedup = unaided time / assisted time computed on both
medians and means of the per-case reading times; the paired t-test runs on
per-case time differences.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass
from typing import Optional, Sequence

from ..domain import StagingLabel, normalize_label
from .metrics import LabeledPrediction, METRIC_NAMES, compute_metrics
from .stats import NoPairs, PairedTestResult, paired_t_test


@dataclass(frozen=True)
class ReaderRecord:
    reader_id: str
    seniority: str  # junior | intermediate | senior
    specialty: str  # neurologist | radiologist
    case_id: str
    truth: StagingLabel
    unaided_label: StagingLabel
    unaided_seconds: float
    assisted_label: StagingLabel
    assisted_seconds: float

    def __post_init__(self) -> None:
        if self.unaided_seconds <= 0 or self.assisted_seconds <= 0:
            raise ValueError("reading times must be positive")


READER_CSV_HEADER = [
    "reader_id", "seniority", "specialty", "case_id", "truth",
    "unaided_label", "unaided_seconds", "assisted_label", "assisted_seconds",
]


def load_reader_records_csv(path: str) -> list[ReaderRecord]:
    records = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(READER_CSV_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"reader CSV missing columns: {sorted(missing)}")
        for row in reader:
            records.append(ReaderRecord(
                reader_id=row["reader_id"],
                seniority=row["seniority"].strip().lower(),
                specialty=row["specialty"].strip().lower(),
                case_id=row["case_id"],
                truth=normalize_label(row["truth"]),
                unaided_label=normalize_label(row["unaided_label"]),
                unaided_seconds=float(row["unaided_seconds"]),
                assisted_label=normalize_label(row["assisted_label"]),
                assisted_seconds=float(row["assisted_seconds"]),
            ))
    return records


def improvement_ratio(unaided: float, assisted: float) -> float:
    """(assisted - unaided) / unaided x 100, in percentage points."""
    if unaided == 0:
        raise ZeroDivisionError("unaided value is zero; ratio undefined")
    return (assisted - unaided) / unaided * 100.0


def speedup(unaided_time: float, assisted_time: float) -> float:
    """Unaided time over assisted time (>1 means faster with assistance)."""
    if assisted_time <= 0:
        raise ValueError("assisted time must be positive")
    return unaided_time / assisted_time


@dataclass(frozen=True)
class ReaderGroupStats:
    group: str
    n_cases: int
    unaided: dict[str, float]
    assisted: dict[str, float]
    improvement: dict[str, float]
    median_unaided_s: float
    median_assisted_s: float
    median_speedup: float
    mean_unaided_s: float
    mean_assisted_s: float
    mean_speedup: float
    time_test: PairedTestResult

    def to_json_dict(self) -> dict:
        return {
            "group": self.group,
            "n_cases": self.n_cases,
            "unaided": dict(self.unaided),
            "assisted": dict(self.assisted),
            "improvement_ratio": dict(self.improvement),
            "time": {
                "median_unaided_s": self.median_unaided_s,
                "median_assisted_s": self.median_assisted_s,
                "median_speedup": self.median_speedup,
                "mean_unaided_s": self.mean_unaided_s,
                "mean_assisted_s": self.mean_assisted_s,
                "mean_speedup": self.mean_speedup,
                "t": self.time_test.t,
                "df": self.time_test.df,
                "p_value": self.time_test.p_value,
                "cohens_dz": self.time_test.cohens_dz,
            },
        }


def _group_key(record: ReaderRecord) -> str:
    return f"{record.seniority} {record.specialty}"


def _condition_metrics(records: Sequence[ReaderRecord], assisted: bool) -> dict[str, float]:
    predictions = [
        LabeledPrediction(
            case_id=r.case_id,
            truth=r.truth,
            predicted=r.assisted_label if assisted else r.unaided_label,
        )
        for r in records
    ]
    metrics = compute_metrics(predictions)
    return {name: metrics.value(name) for name in METRIC_NAMES}


def _stats_for(records: Sequence[ReaderRecord], group: str) -> ReaderGroupStats:
    unaided = _condition_metrics(records, assisted=False)
    assisted = _condition_metrics(records, assisted=True)
    improvement = {
        name: improvement_ratio(unaided[name], assisted[name])
        for name in METRIC_NAMES
        if unaided[name] != 0
    }
    unaided_times = [r.unaided_seconds for r in records]
    assisted_times = [r.assisted_seconds for r in records]
    diffs = [u - a for u, a in zip(unaided_times, assisted_times)]
    median_u = statistics.median(unaided_times)
    median_a = statistics.median(assisted_times)
    mean_u = statistics.fmean(unaided_times)
    mean_a = statistics.fmean(assisted_times)
    return ReaderGroupStats(
        group=group,
        n_cases=len(records),
        unaided=unaided,
        assisted=assisted,
        improvement=improvement,
        median_unaided_s=median_u,
        median_assisted_s=median_a,
        median_speedup=speedup(median_u, median_a),
        mean_unaided_s=mean_u,
        mean_assisted_s=mean_a,
        mean_speedup=speedup(mean_u, mean_a),
        time_test=paired_t_test(diffs),
    )


def reader_study_stats(
    records: Sequence[ReaderRecord], include_overall: bool = True
) -> dict[str, ReaderGroupStats]:
    """Per (seniority x specialty) group statistics, plus an overall row."""
    if not records:
        raise NoPairs("no reader records")
    groups: dict[str, list[ReaderRecord]] = {}
    for record in records:
        groups.setdefault(_group_key(record), []).append(record)
    out = {key: _stats_for(members, key) for key, members in sorted(groups.items())}
    if include_overall and len(groups) > 1:
        out["overall"] = _stats_for(list(records), "overall")
    return out
