"""Statistical evaluation harness: metrics, bootstrap CIs, fairness
dispersion, reader-study arithmetic, and backbone cost-effectiveness."""

from .bootstrap import DEFAULT_RESAMPLES, bootstrap_ci, bootstrap_standard_error
from .costs import (
    BackboneCostRow,
    CostReport,
    cost_effectiveness,
    cost_markdown_table,
    frontier_rows,
    load_cost_rows_csv,
    pareto_frontier,
)
from .fairness import (
    InsufficientSubgroups,
    SubgroupReport,
    dispersion_from_values,
    fairness_dispersion,
    population_std,
)
from .metrics import (
    AGE_BINS,
    ClassMetrics,
    EmptyInput,
    LabeledPrediction,
    METRIC_NAMES,
    MetricSet,
    age_bin,
    compute_metrics,
    load_predictions_jsonl,
)
from .readers import (
    ReaderGroupStats,
    ReaderRecord,
    improvement_ratio,
    load_reader_records_csv,
    reader_study_stats,
    speedup,
)
from .stats import (
    NoPairs,
    PairedTestResult,
    ZeroVariance,
    paired_t_test,
    regularized_incomplete_beta,
    t_p_value_two_sided,
)
