from prunekit.search.config import (
    SearchConfig,
    SubsetSpec,
    round_down_to_grid,
    round_up_to_grid,
)
from prunekit.search.divergence import DivergenceReport, filter_divergence, pairwise_divergence
from prunekit.search.search import (
    SearchResult,
    SubsetData,
    TraceEntry,
    TrialResult,
    baseline_accuracy,
    dapr_search,
    estimate_train_memory,
    finetune,
    make_trial_runner,
    retrain_schedule,
    subset_seed,
    weights_digest,
)
from prunekit.search.sweep import (
    CSV_COLUMNS,
    SWEEP_MODES,
    SweepRow,
    csv_to_rows,
    oracle_sweep,
    rows_to_csv,
)

__all__ = [
    "CSV_COLUMNS",
    "SWEEP_MODES",
    "DivergenceReport",
    "SearchConfig",
    "SearchResult",
    "SubsetData",
    "SubsetSpec",
    "SweepRow",
    "TraceEntry",
    "TrialResult",
    "baseline_accuracy",
    "csv_to_rows",
    "dapr_search",
    "estimate_train_memory",
    "filter_divergence",
    "finetune",
    "make_trial_runner",
    "oracle_sweep",
    "pairwise_divergence",
    "retrain_schedule",
    "round_down_to_grid",
    "round_up_to_grid",
    "rows_to_csv",
    "subset_seed",
    "weights_digest",
]
