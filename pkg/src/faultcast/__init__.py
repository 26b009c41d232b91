"""Sensor-fault stress testing and robustness scoring for forecasters."""

from .dataset import (
    ChannelSchema,
    DatasetError,
    SplitBounds,
    StandardizationStats,
    TimeSeriesDataset,
    WindowSample,
    WindowSource,
    apply_standardizer,
    chronological_split,
    destandardize,
    enumerate_windows,
    fit_standardizer,
    load_csv,
    sample_windows,
)
from .faults import (
    BENCHMARK_ORDER,
    BENCHMARK_SPECS,
    TRANSFER_FAMILIES,
    ChannelRule,
    PerturbationDraw,
    Scenario,
    apply_scenario,
    apply_transfer,
    channel_count,
    channel_count_fixed,
    draw_perturbation,
    interp,
    perturb,
    severity_map,
    warp_segment,
)
from .forecast import (
    ConstantForecaster,
    EnsembleForecaster,
    FitError,
    ProtocolViolationError,
    RidgeForecaster,
    SeasonalNaiveForecaster,
    SmoothedForecaster,
    ensemble_predict,
    fit_fault_augmented,
    fit_linear,
    select_seasonal_period,
    select_winner,
    smoothed_predict,
)
from .adapter import (
    AdapterError,
    AdapterIdMismatchError,
    AdapterProcessError,
    AdapterProtocolError,
    AdapterShapeError,
    AdapterTimeoutError,
    ExternalForecaster,
    ExternalModelClient,
)
from .score import (
    DegradationUndefinedError,
    EvalConfig,
    PairDelta,
    RobustnessReport,
    ScoreError,
    degradation,
    effective_robustness,
    evaluate,
    mean_case,
    mse_target,
    paired_deltas,
    reference_normalized,
    report_json_bytes,
    worst_scenario,
    write_report_files,
)
from .stats import (
    Interval,
    bootstrap_pairs,
    bootstrap_windows,
    logspace_fit,
    percentile_interval,
    spearman,
)
from .rng import Stream, derive, fnv1a64, mix64

__version__ = "0.1.0"
