"""matchexp: matched pairwise experiments from observational time series.

Builds hypothetical pairwise randomized experiments via constrained pair
matching, then quantifies treatment effects with randomization-based
inference, sensitivity analysis, and retrospective design diagnostics.
"""

__version__ = "0.1.0"

from .balance import (
    BalanceReport,
    RandomizationCheckResult,
    balance_report,
    randomization_check,
)
from .config import RunConfig, derive_seed, load_config, parse_config
from .dataset import (
    CalendarTable,
    LagView,
    Schema,
    TimeSeriesDataset,
    Unit,
    ingest_csv,
    lag_name,
)
from .design import (
    ExperimentDesign,
    TreatmentRule,
    TreatmentSummary,
    assign_treatment,
)
from .errors import ConfigError, DataError, GridError, MatchexpError, SchemaError
from .inference import (
    InferenceSettings,
    IntervalReport,
    InversionResult,
    NeymanResult,
    PairDifferenceSeries,
    SharpNullGrid,
    estimate_intervals,
    fisherian_interval,
    invert_tests,
    neyman,
    pair_differences,
    point_estimate,
    studentized_interval,
    subgroup_analysis,
    wilcoxon_statistic,
)
from .matching import (
    CovariateConstraint,
    EdgeSet,
    MatchSpec,
    MatchedPairSet,
    SpilloverReport,
    candidate_edges,
    complete_case_filter,
    eligible,
    match_pairs,
    maximum_matching,
    spillover_report,
)
from .retrodesign import RetrodesignResult, retrodesign, retrodesign_curve
from .sensitivity import (
    GammaLadder,
    PlaceboResult,
    SensitivityResult,
    placebo_lag_analysis,
    rosenbaum_intervals,
)
from .synth import (
    CoverageSummary,
    GroundTruth,
    PairedDGP,
    SynthConfig,
    coverage_experiment,
    generate,
)

__all__ = [
    "__version__",
    "BalanceReport",
    "CalendarTable",
    "ConfigError",
    "CovariateConstraint",
    "CoverageSummary",
    "DataError",
    "EdgeSet",
    "ExperimentDesign",
    "GammaLadder",
    "GridError",
    "GroundTruth",
    "InferenceSettings",
    "IntervalReport",
    "InversionResult",
    "LagView",
    "MatchSpec",
    "MatchedPairSet",
    "MatchexpError",
    "NeymanResult",
    "PairDifferenceSeries",
    "PairedDGP",
    "PlaceboResult",
    "RandomizationCheckResult",
    "RetrodesignResult",
    "RunConfig",
    "Schema",
    "SchemaError",
    "SensitivityResult",
    "SharpNullGrid",
    "SpilloverReport",
    "SynthConfig",
    "TimeSeriesDataset",
    "TreatmentRule",
    "TreatmentSummary",
    "Unit",
    "assign_treatment",
    "balance_report",
    "candidate_edges",
    "complete_case_filter",
    "coverage_experiment",
    "derive_seed",
    "eligible",
    "estimate_intervals",
    "fisherian_interval",
    "generate",
    "ingest_csv",
    "invert_tests",
    "lag_name",
    "load_config",
    "match_pairs",
    "maximum_matching",
    "neyman",
    "pair_differences",
    "parse_config",
    "placebo_lag_analysis",
    "point_estimate",
    "randomization_check",
    "retrodesign",
    "retrodesign_curve",
    "rosenbaum_intervals",
    "spillover_report",
    "studentized_interval",
    "subgroup_analysis",
    "wilcoxon_statistic",
]
