"""Run metrics, cross-run comparison tables, and their JSON/CSV emitters."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd

from .catalog import TaskClass
from .engine import SimulationReport, report_to_dict
from .errors import EmptySampleError, MissingTaskClassError, UnknownBaselineError

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Iterable, Sequence

CSV_COLUMNS = [
    "pattern",
    "variant",
    "cache_hit_rate",
    "load_overhead_s",
    "evictions",
    "ttft_mean_s",
    "ttft_p95_s",
    "ttft_p99_s",
    "e2e_mean_s",
    "e2e_p95_s",
    "e2e_p99_s",
]

SIGN_CONVENTIONS = (
    "cost deltas are reductions (baseline - candidate) / baseline, positive means the candidate is better; "
    "cache_hit_rate delta is candidate - baseline in absolute terms; null means the baseline is zero"
)

_REDUCTION_FIELDS: dict[str, tuple[str, str]] = {
    "ttft_mean": ("ttft_completion", "mean_s"),
    "ttft_p95": ("ttft_completion", "p95_s"),
    "ttft_p99": ("ttft_completion", "p99_s"),
    "e2e_mean": ("e2e_reasoning", "mean_s"),
    "e2e_p95": ("e2e_reasoning", "p95_s"),
    "e2e_p99": ("e2e_reasoning", "p99_s"),
}


class EmitFormat(StrEnum):
    JSON = "json"
    CSV = "csv"


@dataclass(frozen=True)
class LatencySummary:
    count: int
    mean_s: float
    p50_s: float
    p95_s: float
    p99_s: float
    max_s: float


@dataclass(frozen=True)
class RunMetrics:
    """Metrics of one run, or of a seed-averaged cell when `runs` > 1.

    `evictions` stays an integer count: for a cell it is the total over its runs,
    and `mean_evictions` is the per-run mean that comparisons use.
    """

    cache_hit_rate: float
    load_overhead_s: float
    evictions: int
    ttft_completion: LatencySummary | None
    e2e_reasoning: LatencySummary | None
    total_requests: int = 0
    hit_rate_completion: float | None = None
    hit_rate_reasoning: float | None = None
    runs: int = 1

    @property
    def mean_evictions(self) -> float:
        return self.evictions / self.runs


@dataclass(frozen=True)
class ComparisonRow:
    pattern: str
    variant: str
    metrics: RunMetrics
    deltas: dict[str, float | None] = field(default_factory=dict)


@dataclass(frozen=True)
class ComparisonTable:
    baseline: str
    rows: tuple[ComparisonRow, ...]

    def row(self, pattern: str, variant: str) -> ComparisonRow:
        for row in self.rows:
            if row.pattern == pattern and row.variant == variant:
                return row
        raise KeyError((pattern, variant))

    def to_frame(self) -> pd.DataFrame:
        """One row per (pattern, variant) with the fixed CSV columns."""
        records = [_csv_record(row) for row in self.rows]
        return pd.DataFrame(records).reindex(columns=CSV_COLUMNS)


def _nearest_rank(ordered: np.ndarray[Any, np.dtype[np.float64]], q: float) -> float:
    # ceil(q * n)-th order statistic; rounding keeps 0.95 * 20 at rank 19
    rank = max(1, math.ceil(round(q * len(ordered), 9)))
    return float(ordered[rank - 1])


def summarize(samples: Iterable[float]) -> LatencySummary:
    """Nearest-rank percentiles and arithmetic mean of a latency sample."""
    ordered = np.sort(np.asarray(list(samples), dtype=np.float64))
    if ordered.size == 0:
        raise EmptySampleError()

    lo, hi = float(ordered[0]), float(ordered[-1])
    mean = min(max(float(np.mean(ordered)), lo), hi)
    return LatencySummary(
        count=int(ordered.size),
        mean_s=mean,
        p50_s=_nearest_rank(ordered, 0.50),
        p95_s=_nearest_rank(ordered, 0.95),
        p99_s=_nearest_rank(ordered, 0.99),
        max_s=hi,
    )


def compute_run_metrics(report: SimulationReport, partial: bool = False) -> RunMetrics:
    """Aggregate one report into hit rate, load overhead, TTFT and E2E summaries.

    TTFT is summarized over Completion outcomes only and E2E over Reasoning
    outcomes only. Unless `partial` is set, a missing task class is an error.
    """
    counters = report.counters
    attempts = counters.hits + counters.misses

    by_class: dict[TaskClass, list[Any]] = {t: [] for t in TaskClass}
    for outcome in report.outcomes:
        by_class[outcome.task_class].append(outcome)

    summaries: dict[TaskClass, LatencySummary | None] = {}
    hit_rates: dict[TaskClass, float | None] = {}
    for task_class, outcomes in by_class.items():
        if not outcomes:
            if not partial:
                raise MissingTaskClassError(task_class.value)
            summaries[task_class] = None
            hit_rates[task_class] = None
            continue

        latency = "ttft_s" if task_class is TaskClass.COMPLETION else "e2e_s"
        summaries[task_class] = summarize(getattr(o, latency) for o in outcomes)
        hit_rates[task_class] = sum(not o.cold_start for o in outcomes) / len(outcomes)

    return RunMetrics(
        cache_hit_rate=counters.hits / attempts if attempts else 0.0,
        load_overhead_s=counters.load_overhead_s,
        evictions=counters.evictions,
        ttft_completion=summaries[TaskClass.COMPLETION],
        e2e_reasoning=summaries[TaskClass.REASONING],
        total_requests=report.total_requests,
        hit_rate_completion=hit_rates[TaskClass.COMPLETION],
        hit_rate_reasoning=hit_rates[TaskClass.REASONING],
    )


def _mean_or_none(values: Sequence[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def _average_summaries(summaries: Sequence[LatencySummary | None]) -> LatencySummary | None:
    present = [s for s in summaries if s is not None]
    if not present:
        return None
    return LatencySummary(
        count=sum(s.count for s in present),
        mean_s=float(np.mean([s.mean_s for s in present])),
        p50_s=float(np.mean([s.p50_s for s in present])),
        p95_s=float(np.mean([s.p95_s for s in present])),
        p99_s=float(np.mean([s.p99_s for s in present])),
        max_s=max(s.max_s for s in present),
    )


def average_metrics(runs: Sequence[RunMetrics]) -> RunMetrics:
    """Seed-average a cell: every statistic is the mean across runs, counts are summed."""
    if not runs:
        raise EmptySampleError("run")
    if len(runs) == 1:
        return runs[0]

    return RunMetrics(
        cache_hit_rate=float(np.mean([r.cache_hit_rate for r in runs])),
        load_overhead_s=float(np.mean([r.load_overhead_s for r in runs])),
        evictions=sum(r.evictions for r in runs),
        ttft_completion=_average_summaries([r.ttft_completion for r in runs]),
        e2e_reasoning=_average_summaries([r.e2e_reasoning for r in runs]),
        total_requests=sum(r.total_requests for r in runs),
        hit_rate_completion=_mean_or_none([r.hit_rate_completion for r in runs]),
        hit_rate_reasoning=_mean_or_none([r.hit_rate_reasoning for r in runs]),
        runs=sum(r.runs for r in runs),
    )


def _reduction(baseline: float | None, candidate: float | None) -> float | None:
    if baseline is None or candidate is None:
        return None
    if baseline == 0:
        return 0.0 if candidate == 0 else None
    return (baseline - candidate) / baseline


def _stat(metrics: RunMetrics, summary: str, stat: str) -> float | None:
    value: LatencySummary | None = getattr(metrics, summary)
    return None if value is None else getattr(value, stat)


def _deltas(baseline: RunMetrics, candidate: RunMetrics) -> dict[str, float | None]:
    deltas: dict[str, float | None] = {
        name: _reduction(_stat(baseline, summary, stat), _stat(candidate, summary, stat))
        for name, (summary, stat) in _REDUCTION_FIELDS.items()
    }
    deltas["load_overhead"] = _reduction(baseline.load_overhead_s, candidate.load_overhead_s)
    deltas["evictions"] = _reduction(baseline.mean_evictions, candidate.mean_evictions)
    deltas["cache_hit_rate"] = candidate.cache_hit_rate - baseline.cache_hit_rate
    return deltas


def _split_label(label: str | tuple[str, str]) -> tuple[str, str]:
    return label if isinstance(label, tuple) else ("", label)


def compare(runs: Sequence[tuple[str | tuple[str, str], RunMetrics]], baseline_label: str) -> ComparisonTable:
    """Relative deltas of every run against the baseline variant of the same pattern.

    Args:
        runs: `(label, metrics)` pairs; a label is a variant name or a `(pattern, variant)` tuple.
        baseline_label: Variant name of the baseline row.

    Returns:
        A table with one row per run, in input order.
    """
    keyed = [(*_split_label(label), metrics) for label, metrics in runs]
    baselines = {pattern: metrics for pattern, variant, metrics in keyed if variant == baseline_label}

    rows: list[ComparisonRow] = []
    for pattern, variant, metrics in keyed:
        if pattern not in baselines:
            raise UnknownBaselineError(baseline_label, pattern or None)
        rows.append(ComparisonRow(pattern, variant, metrics, _deltas(baselines[pattern], metrics)))

    if not rows and runs:  # pragma: no cover
        raise UnknownBaselineError(baseline_label)
    if not baselines:
        raise UnknownBaselineError(baseline_label)
    return ComparisonTable(baseline=baseline_label, rows=tuple(rows))


def _csv_record(row: ComparisonRow) -> dict[str, Any]:
    m = row.metrics
    return {
        "pattern": row.pattern,
        "variant": row.variant,
        "cache_hit_rate": m.cache_hit_rate,
        "load_overhead_s": m.load_overhead_s,
        "evictions": m.mean_evictions,
        "ttft_mean_s": _stat(m, "ttft_completion", "mean_s"),
        "ttft_p95_s": _stat(m, "ttft_completion", "p95_s"),
        "ttft_p99_s": _stat(m, "ttft_completion", "p99_s"),
        "e2e_mean_s": _stat(m, "e2e_reasoning", "mean_s"),
        "e2e_p95_s": _stat(m, "e2e_reasoning", "p95_s"),
        "e2e_p99_s": _stat(m, "e2e_reasoning", "p99_s"),
    }


def table_to_dict(table: ComparisonTable) -> dict[str, Any]:
    return {
        "baseline": table.baseline,
        "sign_conventions": SIGN_CONVENTIONS,
        "rows": [
            {"pattern": r.pattern, "variant": r.variant, "metrics": asdict(r.metrics), "deltas": r.deltas}
            for r in table.rows
        ],
    }


def emit(obj: SimulationReport | RunMetrics | ComparisonTable, fmt: EmitFormat | str = EmitFormat.JSON) -> bytes:
    """Serialize a report, run metrics, or comparison table with stable field order."""
    fmt = EmitFormat(fmt)

    if fmt is EmitFormat.JSON:
        if isinstance(obj, ComparisonTable):
            doc = table_to_dict(obj)
        elif isinstance(obj, SimulationReport):
            doc = report_to_dict(obj)
        else:
            doc = asdict(obj)
        return (json.dumps(doc, indent=2) + "\n").encode("utf-8")

    if isinstance(obj, ComparisonTable):
        frame = obj.to_frame()
    elif isinstance(obj, SimulationReport):
        frame = pd.DataFrame(report_to_dict(obj)["outcomes"])
    else:
        frame = pd.DataFrame([asdict(obj)])
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")
