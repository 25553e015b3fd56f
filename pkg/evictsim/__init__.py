from __future__ import annotations

from .catalog import (
    DEFAULT_TEMPLATES,
    Language,
    ModelCatalog,
    ModelDescriptor,
    ModelTemplate,
    ProfileParams,
    TaskClass,
    build_catalog,
    build_default_catalog,
    load_catalog,
    lookup,
    profile_model,
    save_catalog,
)
from .context import RunContext, RunContextFilter, current_run
from .engine import (
    ClusterConfig,
    RequestOutcome,
    SimEvent,
    SimulationCounters,
    SimulationReport,
    Simulator,
    load_report,
    run,
    save_report,
    service_times,
    snapshot_window,
)
from .errors import (
    ArrivalRateError,
    CatalogModelNotFoundError,
    CatalogParseError,
    CatalogValidationError,
    ClockOrderError,
    ClusterConfigError,
    EmptySampleError,
    ExperimentConfigError,
    MissingTaskClassError,
    PolicyConfigError,
    ProfileParamsError,
    ReportParseError,
    ResidencyOverflowError,
    SimulationDeadlockError,
    TraceParseError,
    TraceValidationError,
    UnknownBaselineError,
    UnknownPatternError,
    UnknownVariantError,
)
from .experiment import ExperimentConfig, Settings, build_table, load_experiment_config, run_cell, run_grid
from .metrics import (
    ComparisonTable,
    LatencySummary,
    RunMetrics,
    average_metrics,
    compare,
    compute_run_metrics,
    emit,
    summarize,
)
from .policy import (
    ContextAwarePolicy,
    EvictionPolicy,
    Factor,
    LookaheadWindow,
    LruPolicy,
    P1Mode,
    PolicyConfig,
    ResidencyEntry,
    ResidencySet,
    ScoreBreakdown,
    Variant,
    dedup_window,
    eviction_score,
    make_policy,
    score_residents,
    select_victim,
)
from .workload import (
    PATTERNS,
    OutputDistribution,
    PatternName,
    Request,
    TokenParams,
    Trace,
    WorkloadPattern,
    assign_labels,
    build_trace,
    generate_arrivals,
    get_pattern,
    label_census,
    parse_trace,
    serialize_trace,
)

__all__ = [
    "DEFAULT_TEMPLATES",
    "PATTERNS",
    "ArrivalRateError",
    "CatalogModelNotFoundError",
    "CatalogParseError",
    "CatalogValidationError",
    "ClockOrderError",
    "ClusterConfig",
    "ClusterConfigError",
    "ComparisonTable",
    "ContextAwarePolicy",
    "EmptySampleError",
    "EvictionPolicy",
    "ExperimentConfig",
    "ExperimentConfigError",
    "Factor",
    "Language",
    "LatencySummary",
    "LookaheadWindow",
    "LruPolicy",
    "MissingTaskClassError",
    "ModelCatalog",
    "ModelDescriptor",
    "ModelTemplate",
    "OutputDistribution",
    "P1Mode",
    "PatternName",
    "PolicyConfig",
    "PolicyConfigError",
    "ProfileParams",
    "ProfileParamsError",
    "ReportParseError",
    "Request",
    "RequestOutcome",
    "ResidencyEntry",
    "ResidencyOverflowError",
    "ResidencySet",
    "RunContext",
    "RunContextFilter",
    "RunMetrics",
    "ScoreBreakdown",
    "Settings",
    "SimEvent",
    "SimulationCounters",
    "SimulationDeadlockError",
    "SimulationReport",
    "Simulator",
    "TaskClass",
    "TokenParams",
    "Trace",
    "TraceParseError",
    "TraceValidationError",
    "UnknownBaselineError",
    "UnknownPatternError",
    "UnknownVariantError",
    "Variant",
    "WorkloadPattern",
    "assign_labels",
    "average_metrics",
    "build_catalog",
    "build_default_catalog",
    "build_table",
    "build_trace",
    "compare",
    "compute_run_metrics",
    "current_run",
    "dedup_window",
    "emit",
    "eviction_score",
    "generate_arrivals",
    "get_pattern",
    "label_census",
    "load_catalog",
    "load_experiment_config",
    "load_report",
    "lookup",
    "make_policy",
    "parse_trace",
    "profile_model",
    "run",
    "run_cell",
    "run_grid",
    "save_catalog",
    "save_report",
    "score_residents",
    "select_victim",
    "serialize_trace",
    "service_times",
    "snapshot_window",
    "summarize",
]
