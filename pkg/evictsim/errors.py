from __future__ import annotations

from typing import Any


class ProfileParamsError(ValueError):
    """Raised when profiler parameters or a descriptor cannot produce a load time."""

    def __init__(self, field: str, value: Any) -> None:
        self.field = field
        self.value = value
        super().__init__(f"Profiler: '{field}' must be positive, got {value!r}")


class CatalogModelNotFoundError(LookupError):
    """Raised when a (language, task_class) pair or model id is not registered."""

    def __init__(self, key: str) -> None:
        self.key = key
        super().__init__(f"Catalog: no model registered for {key}")


class CatalogParseError(ValueError):
    """Raised when a catalog document is malformed."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None) -> None:
        self.line = line
        self.field = field
        where = "".join([f" (line {line})" if line is not None else "", f" [field '{field}']" if field else ""])
        super().__init__(f"Catalog parse error{where}: {message}")


class CatalogValidationError(ValueError):
    """Raised when a catalog violates one of its invariants."""

    def __init__(self, message: str) -> None:
        super().__init__(f"Catalog: {message}")


class ArrivalRateError(ValueError):
    """Raised when an arrival process is asked for a non-positive rate or negative duration."""

    def __init__(self, field: str, value: float) -> None:
        self.field = field
        self.value = value
        super().__init__(f"Workload: '{field}' is out of range, got {value!r}")


class TraceParseError(ValueError):
    """Raised when a trace file cannot be parsed."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"Trace parse error{where}: {message}")


class TraceValidationError(ValueError):
    """Raised when a parsed trace record violates a trace invariant."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"Trace validation error{where}: {message}")


class UnknownPatternError(ValueError):
    """Raised when a workload pattern name is not one of the known patterns."""

    def __init__(self, name: str, known: list[str]) -> None:
        self.name = name
        super().__init__(f"Workload: unknown pattern '{name}', expected one of {', '.join(known)}")


class UnknownVariantError(ValueError):
    """Raised when a policy variant name cannot be resolved."""

    def __init__(self, name: str, known: list[str]) -> None:
        self.name = name
        super().__init__(f"Policy: unknown variant '{name}', expected one of {', '.join(known)}")


class PolicyConfigError(ValueError):
    """Raised when a policy configuration is invalid or unresolved."""

    def __init__(self, message: str) -> None:
        super().__init__(f"Policy: {message}")


class ClockOrderError(ValueError):
    """Raised when a model is scored at a clock earlier than its last use."""

    def __init__(self, model_id: str, clock: float, last_used_s: float) -> None:
        self.model_id = model_id
        super().__init__(f"Policy ({model_id}): clock {clock!r} precedes last use at {last_used_s!r}")


class SimulationDeadlockError(RuntimeError):
    """Raised when pending requests remain but no event can ever be scheduled."""

    def __init__(self, clock: float, pending: int) -> None:
        self.clock = clock
        self.pending = pending
        super().__init__(f"Engine: deadlock at t={clock!r} with {pending} pending request(s) and an empty event queue")


class ResidencyOverflowError(RuntimeError):
    """Raised when more models occupy accelerators than the cluster holds."""

    def __init__(self, clock: float, resident: int, capacity: int) -> None:
        super().__init__(f"Engine: {resident} models occupy {capacity} accelerator slot(s) at t={clock!r}")


class ReportParseError(ValueError):
    """Raised when a saved simulation report cannot be read back."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"Report parse error{where}: {message}")


class EmptySampleError(ValueError):
    """Raised when a latency summary is requested over no samples."""

    def __init__(self, what: str = "latency") -> None:
        super().__init__(f"Metrics: cannot summarize an empty {what} sample")


class MissingTaskClassError(ValueError):
    """Raised when a report has no outcomes for a task class whose summary is required."""

    def __init__(self, task_class: str) -> None:
        self.task_class = task_class
        super().__init__(f"Metrics: report has no {task_class} outcomes to summarize")


class UnknownBaselineError(KeyError):
    """Raised when a comparison names a baseline that is not among the runs."""

    def __init__(self, baseline: str, pattern: str | None = None) -> None:
        self.baseline = baseline
        scope = f" for pattern '{pattern}'" if pattern else ""
        super().__init__(f"Metrics: baseline '{baseline}' not found{scope}")


class ExperimentConfigError(ValueError):
    """Raised when an experiment manifest or flag combination is invalid."""

    def __init__(self, message: str) -> None:
        super().__init__(f"Experiment: {message}")


class ClusterConfigError(ValueError):
    """Raised when a cluster shape cannot be simulated."""

    def __init__(self, field: str, value: Any, expected: str) -> None:
        self.field = field
        super().__init__(f"Cluster: '{field}' must be {expected}, got {value!r}")
