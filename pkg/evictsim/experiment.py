"""Experiment grids: (patterns x variants x seeds) cells, seed averaging, comparison tables."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, ClassVar

import yaml

from .catalog import decode_document
from .engine import ClusterConfig, SimulationReport, run, save_report
from .errors import ExperimentConfigError, PolicyConfigError, UnknownPatternError, UnknownVariantError
from .metrics import ComparisonTable, RunMetrics, average_metrics, compare, compute_run_metrics, emit
from .policy import P1Mode, PolicyConfig, Variant, make_policy
from .workload import OutputDistribution, PatternName, TokenParams, Trace, build_trace, get_pattern, serialize_trace

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Iterable, Mapping, Sequence

    from .catalog import ModelCatalog

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
ABLATION_VARIANTS = (
    Variant.CACE_FULL,
    Variant.CACE_MINUS_P1,
    Variant.CACE_MINUS_P2,
    Variant.CACE_MINUS_P3,
    Variant.CACE_MINUS_P4,
)


class Settings:
    """Process-wide knobs read lazily from the environment."""

    _workers: ClassVar[int | None] = None
    _log_level: ClassVar[str | None] = None

    @classmethod
    def get_workers(cls) -> int:
        """Get the grid worker count from environment variable."""
        if cls._workers is None:
            raw = os.getenv("EVICTSIM_WORKERS", "1")
            try:
                cls._workers = max(1, int(raw))
            except ValueError as err:
                raise ExperimentConfigError(f"EVICTSIM_WORKERS must be an integer, got {raw!r}") from err
        return cls._workers

    @classmethod
    def get_log_level(cls) -> str:
        """Get the log level from environment variable."""
        if cls._log_level is None:
            cls._log_level = os.getenv("EVICTSIM_LOG_LEVEL", "WARNING").upper()
        return cls._log_level

    @classmethod
    def reset(cls) -> None:
        cls._workers = None
        cls._log_level = None


@dataclass(frozen=True)
class ExperimentConfig:
    patterns: tuple[PatternName, ...] = tuple(PatternName)
    variants: tuple[Variant, ...] = (Variant.LRU, Variant.CACE_MINUS_P4, Variant.CACE_FULL)
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    rate: float = 0.45
    duration: float = 120.0
    windows: int = 6
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    w1: float = 1.0
    window_length: int = 10
    p1_mode: P1Mode = P1Mode.PROSE
    baseline: Variant = Variant.LRU
    token_params: TokenParams = field(default_factory=TokenParams)
    out: Path | None = None

    def __post_init__(self) -> None:
        for name in ("patterns", "variants", "seeds"):
            if not getattr(self, name):
                raise ExperimentConfigError(f"'{name}' must not be empty")
        if self.baseline not in self.variants:
            raise ExperimentConfigError(f"baseline '{self.baseline.value}' is not among the variants")
        if not self.rate > 0:
            raise ExperimentConfigError(f"rate must be > 0, got {self.rate!r}")
        if not self.duration >= 0:
            raise ExperimentConfigError(f"duration must be >= 0, got {self.duration!r}")
        if self.windows < 1:
            raise ExperimentConfigError(f"windows must be >= 1, got {self.windows!r}")
        self.policy_config(self.baseline)

    def policy_config(self, variant: Variant) -> PolicyConfig:
        try:
            return PolicyConfig(variant=variant, w1=self.w1, window_length=self.window_length, p1_mode=self.p1_mode)
        except PolicyConfigError as err:
            raise ExperimentConfigError(str(err)) from err

    def with_overrides(self, **overrides: Any) -> ExperimentConfig:
        """Copy with every non-None override applied (CLI flags beat file values)."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    @classmethod
    def ablation(cls, pattern: PatternName = PatternName.POPULARITY_SKEWED, **overrides: Any) -> ExperimentConfig:
        base = cls(patterns=(pattern,), variants=ABLATION_VARIANTS, baseline=Variant.CACE_FULL)
        return base.with_overrides(**overrides)

    @classmethod
    def from_mapping(cls, doc: Mapping[str, Any]) -> ExperimentConfig:
        """Build a config from a parsed manifest; unknown keys are rejected."""
        known = {f.name for f in fields(cls)}
        if unknown := sorted(set(doc) - known):
            raise ExperimentConfigError(f"unknown key(s) {', '.join(unknown)}")

        values: dict[str, Any] = {}
        try:
            if "patterns" in doc:
                values["patterns"] = tuple(get_pattern(p).name for p in _as_list(doc["patterns"]))
            if "variants" in doc:
                values["variants"] = tuple(Variant.parse(v) for v in _as_list(doc["variants"]))
            if "baseline" in doc:
                values["baseline"] = Variant.parse(doc["baseline"])
            if "seeds" in doc:
                values["seeds"] = tuple(int(s) for s in _as_list(doc["seeds"]))
            for name, cast in (("rate", float), ("duration", float), ("windows", int), ("w1", float)):
                if name in doc:
                    values[name] = cast(doc[name])
            if "window_length" in doc:
                values["window_length"] = int(doc["window_length"])
            if "p1_mode" in doc:
                values["p1_mode"] = P1Mode(doc["p1_mode"])
            if "cluster" in doc:
                values["cluster"] = ClusterConfig(**dict(doc["cluster"]))
            if "token_params" in doc:
                raw = dict(doc["token_params"])
                if "output_distribution" in raw:
                    raw["output_distribution"] = OutputDistribution(raw["output_distribution"])
                values["token_params"] = TokenParams(**raw)
            if "out" in doc:
                values["out"] = Path(doc["out"])
        except (UnknownPatternError, UnknownVariantError) as err:
            raise ExperimentConfigError(str(err)) from err
        except (TypeError, ValueError) as err:
            raise ExperimentConfigError(f"bad value: {err}") from err

        if "baseline" not in values and "variants" in values and Variant.LRU not in values["variants"]:
            values["baseline"] = values["variants"][0]
        return cls(**values)


def _as_list(value: Any) -> list[Any]:
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return list(value)


def load_experiment_config(data: bytes | str) -> ExperimentConfig:
    """Parse a YAML (or JSON) experiment manifest."""
    try:
        doc: Any = yaml.safe_load(decode_document(data))
    except yaml.YAMLError as err:
        raise ExperimentConfigError(f"unreadable manifest: {err}") from err
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ExperimentConfigError("manifest must be a mapping")
    return ExperimentConfig.from_mapping(doc)  # pyright: ignore[reportUnknownArgumentType]


@dataclass(frozen=True)
class CellTask:
    pattern: PatternName
    variant: Variant
    seed: int
    config: ExperimentConfig
    catalog: ModelCatalog


@dataclass(frozen=True)
class CellResult:
    pattern: PatternName
    variant: Variant
    seed: int
    trace: Trace
    report: SimulationReport

    @property
    def metrics(self) -> RunMetrics:
        return compute_run_metrics(self.report, partial=True)


def trace_for(config: ExperimentConfig, pattern: PatternName, seed: int, catalog: ModelCatalog) -> Trace:
    return build_trace(
        pattern,
        config.rate,
        config.duration,
        seed,
        catalog,
        token_params=config.token_params,
        windows=config.windows,
    )


def run_cell(task: CellTask) -> CellResult:
    """One simulation: build the (pattern, seed) trace and replay it under the variant."""
    config = task.config
    trace = trace_for(config, task.pattern, task.seed, task.catalog)
    cfg = config.policy_config(task.variant).resolve(task.catalog)
    report = run(trace, task.catalog, config.cluster, make_policy(cfg), cfg)
    return CellResult(task.pattern, task.variant, task.seed, trace, report)


def grid_tasks(config: ExperimentConfig, catalog: ModelCatalog) -> list[CellTask]:
    return [
        CellTask(pattern, variant, seed, config, catalog)
        for pattern in config.patterns
        for variant in config.variants
        for seed in config.seeds
    ]


def run_grid(config: ExperimentConfig, catalog: ModelCatalog, workers: int | None = None) -> list[CellResult]:
    """Run every cell, in a process pool when more than one worker is configured.

    Results come back in grid order (pattern, then variant, then seed)
    whatever the worker count.
    """
    tasks = grid_tasks(config, catalog)
    workers = workers or Settings.get_workers()
    logger.info("running %d cells with %d worker(s)", len(tasks), workers)

    if workers <= 1:
        return [run_cell(task) for task in tasks]

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_cell, tasks))


def average_cells(results: Iterable[CellResult]) -> list[tuple[tuple[str, str], RunMetrics]]:
    """Seed-averaged metrics per (pattern, variant), in first-seen order."""
    cells: dict[tuple[str, str], list[RunMetrics]] = {}
    for result in results:
        cells.setdefault((result.pattern.value, result.variant.value), []).append(result.metrics)
    return [(label, average_metrics(runs)) for label, runs in cells.items()]


def build_table(results: Sequence[CellResult], baseline: Variant | str) -> ComparisonTable:
    return compare(average_cells(results), Variant.parse(baseline).value)


def reports_table(reports: Sequence[SimulationReport], baseline: Variant | str) -> ComparisonTable:
    """Compare saved reports, labelled and seed-averaged by their run metadata."""
    cells: dict[tuple[str, str], list[RunMetrics]] = {}
    for report in reports:
        try:
            label = (str(report.run_meta["pattern"]), str(report.run_meta["variant"]))
        except KeyError as err:
            raise ExperimentConfigError(f"report is missing run_meta {err}") from err
        cells.setdefault(label, []).append(compute_run_metrics(report, partial=True))
    return compare([(label, average_metrics(runs)) for label, runs in cells.items()], Variant.parse(baseline).value)


def write_outputs(results: Sequence[CellResult], table: ComparisonTable, out: Path, fmt: str) -> Path:
    """Lay out `traces/`, `reports/` and `comparison.<fmt>` under `out`."""
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(parents=True, exist_ok=True)

    for result in results:
        trace_path = out / "traces" / f"{result.pattern.value}-{result.seed}.jsonl"
        if result.variant is results[0].variant:
            trace_path.write_bytes(serialize_trace(result.trace))
        report_path = out / "reports" / f"{result.pattern.value}-{result.variant.value}-{result.seed}.json"
        report_path.write_bytes(save_report(result.report))

    comparison = out / f"comparison.{fmt}"
    comparison.write_bytes(emit(table, fmt))
    return comparison
