"""Deterministic discrete-event simulator of the serving orchestrator.

Requests queue in one global FIFO. Only the head of the queue is dispatched:
it is served when its model is resident and idle, waits when the model is
busy or loading, and otherwise triggers a load into a free accelerator slot
or, when none is free, into the slot of a victim chosen by the policy.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import logging
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import IntEnum, StrEnum
from typing import TYPE_CHECKING, Any

from .catalog import TaskClass, decode_document, lookup
from .context import RunContext
from .errors import (
    ClusterConfigError,
    PolicyConfigError,
    ReportParseError,
    ResidencyOverflowError,
    SimulationDeadlockError,
)
from .policy import LookaheadWindow, PolicyConfig, ResidencyEntry, ResidencySet, dedup_window
from .workload import trace_header

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Iterable

    from .catalog import ModelCatalog, ModelDescriptor
    from .policy import EvictionPolicy
    from .workload import Request, Trace

logger = logging.getLogger(__name__)

REPORT_VERSION = 1


@dataclass(frozen=True)
class ClusterConfig:
    num_accelerators: int = 4
    models_per_accelerator: int = 1
    unload_time_s: float = 0.0

    def __post_init__(self) -> None:
        if self.num_accelerators < 1:
            raise ClusterConfigError("num_accelerators", self.num_accelerators, ">= 1")
        if self.models_per_accelerator != 1:
            raise ClusterConfigError("models_per_accelerator", self.models_per_accelerator, "1")
        if not self.unload_time_s >= 0:
            raise ClusterConfigError("unload_time_s", self.unload_time_s, ">= 0")

    @property
    def capacity(self) -> int:
        return self.num_accelerators * self.models_per_accelerator


class EventKind(IntEnum):
    # value order is the tie-break order for simultaneous events
    LOAD_COMPLETE = 0
    SERVICE_COMPLETE = 1
    ARRIVAL = 2


@dataclass(frozen=True, order=True)
class SimEvent:
    time_s: float
    kind: EventKind
    seq: int
    payload: Request | str = field(compare=False)


class SlotState(StrEnum):
    LOADING = "loading"
    IDLE = "idle"
    BUSY = "busy"


@dataclass
class _Slot:
    model_id: str
    state: SlotState
    last_used_s: float


@dataclass(frozen=True)
class RequestOutcome:
    request_id: int
    task_class: TaskClass
    model_id: str
    cold_start: bool
    queue_wait_s: float
    load_wait_s: float
    ttft_s: float
    e2e_s: float
    prefill_s: float
    decode_s: float
    service_start_s: float


@dataclass(frozen=True)
class SimulationCounters:
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    loads: int = 0
    load_overhead_s: float = 0.0


@dataclass(frozen=True)
class SimulationReport:
    counters: SimulationCounters
    outcomes: tuple[RequestOutcome, ...]
    run_meta: dict[str, Any] = field(default_factory=dict)

    @property
    def total_requests(self) -> int:
        return len(self.outcomes)


def service_times(request: Request, descriptor: ModelDescriptor) -> tuple[float, float]:
    """Prefill and decode durations of `request` on `descriptor`'s model."""
    prefill_s = request.prompt_tokens / descriptor.prefill_rate_tps
    decode_s = max(1, request.output_tokens) / descriptor.decode_rate_tps
    return prefill_s, decode_s


def snapshot_window(pending_queue: Iterable[Request], window_length: int, catalog: ModelCatalog) -> LookaheadWindow:
    """Lookahead window over the models of the first `window_length` pending requests."""
    model_ids: list[str] = []
    for request in pending_queue:
        if len(model_ids) >= window_length:
            break
        model_ids.append(lookup(catalog, request.language, request.task_class).model_id)
    return dedup_window(model_ids, window_length)


def config_hash(trace: Trace, cluster: ClusterConfig, cfg: PolicyConfig) -> str:
    canonical = json.dumps(
        {"trace": trace_header(trace), "cluster": asdict(cluster), "policy": asdict(cfg)},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


class Simulator:
    """One single-threaded run of a trace against a policy."""

    def __init__(
        self,
        trace: Trace,
        catalog: ModelCatalog,
        cluster: ClusterConfig,
        policy: EvictionPolicy,
        cfg: PolicyConfig | None = None,
    ) -> None:
        self.trace = trace
        self.catalog = catalog
        self.cluster = cluster
        self.policy = policy
        if cfg is not None and cfg != policy.config:
            raise PolicyConfigError(f"run config {cfg.variant.value} differs from the policy's own config")
        self.cfg = policy.config

        self.clock = 0.0
        self._events: list[SimEvent] = []
        self._seq = 0
        self._pending: deque[Request] = deque()
        self._slots: dict[str, _Slot] = {}

        self._attempted: set[int] = set()
        self._cold: set[int] = set()
        self._loading_for: dict[str, tuple[int, float]] = {}
        self._load_wait: dict[int, float] = {}
        self._started: dict[int, tuple[float, float, float, str]] = {}
        self._outcomes: dict[int, RequestOutcome] = {}

        self._hits = 0
        self._misses = 0
        self._evictions = 0
        self._loads = 0
        self._load_overhead_s = 0.0

    def _push(self, time_s: float, kind: EventKind, payload: Request | str) -> None:
        heapq.heappush(self._events, SimEvent(time_s, kind, self._seq, payload))
        self._seq += 1

    def run(self) -> SimulationReport:
        for request in self.trace.requests:
            self._push(request.arrival_time_s, EventKind.ARRIVAL, request)

        while self._events:
            event = heapq.heappop(self._events)
            self.clock = event.time_s
            self._handle(event)
            self._dispatch()
            self._check_residency()

            if not self._events and self._pending:
                raise SimulationDeadlockError(self.clock, len(self._pending))

        return self._report()

    def _handle(self, event: SimEvent) -> None:
        match event.payload:
            case str() as model_id:
                self._complete_load(model_id)
            case request if event.kind is EventKind.ARRIVAL:
                self._pending.append(request)
            case request:
                self._complete_service(request)

    def _dispatch(self) -> None:
        while self._pending:
            request = self._pending[0]
            descriptor = lookup(self.catalog, request.language, request.task_class)
            first_attempt = request.request_id not in self._attempted
            self._attempted.add(request.request_id)
            slot = self._slots.get(descriptor.model_id)

            if slot is not None:
                if first_attempt:
                    self._hits += 1
                if slot.state is not SlotState.IDLE:
                    return
                self._pending.popleft()
                self._start_service(request, descriptor, slot)
                continue

            if first_attempt:
                self._misses += 1
                self._cold.add(request.request_id)

            if len(self._slots) < self.cluster.capacity:
                self._start_load(request, descriptor, unload_s=0.0)
            elif (victim := self._select_victim()) is not None:
                self._evict(victim)
                self._start_load(request, descriptor, unload_s=self.cluster.unload_time_s)
            return

    def _select_victim(self) -> str | None:
        residency = ResidencySet(
            entries=tuple(
                ResidencyEntry(s.model_id, s.last_used_s, busy=s.state is not SlotState.IDLE)
                for s in sorted(self._slots.values(), key=lambda s: s.model_id)
            ),
            capacity=self.cluster.capacity,
        )
        window = snapshot_window(self._pending, self.cfg.window_length, self.catalog)
        return self.policy.select_victim(residency, window, self.catalog, self.clock)

    def _evict(self, model_id: str) -> None:
        del self._slots[model_id]
        self._evictions += 1
        logger.debug("t=%.3f evict %s", self.clock, model_id)

    def _start_load(self, request: Request, descriptor: ModelDescriptor, unload_s: float) -> None:
        self._slots[descriptor.model_id] = _Slot(descriptor.model_id, SlotState.LOADING, self.clock)
        self._loading_for[descriptor.model_id] = (request.request_id, self.clock)
        self._loads += 1
        self._load_overhead_s += descriptor.load_time_s
        self._push(self.clock + unload_s + descriptor.load_time_s, EventKind.LOAD_COMPLETE, descriptor.model_id)
        logger.debug("t=%.3f load %s for request %d", self.clock, descriptor.model_id, request.request_id)

    def _complete_load(self, model_id: str) -> None:
        slot = self._slots[model_id]
        slot.state = SlotState.IDLE
        slot.last_used_s = self.clock
        request_id, started_s = self._loading_for.pop(model_id)
        self._load_wait[request_id] = self.clock - started_s

    def _start_service(self, request: Request, descriptor: ModelDescriptor, slot: _Slot) -> None:
        prefill_s, decode_s = service_times(request, descriptor)
        slot.state = SlotState.BUSY
        self._started[request.request_id] = (self.clock, prefill_s, decode_s, descriptor.model_id)
        self._push(self.clock + prefill_s + decode_s, EventKind.SERVICE_COMPLETE, request)

    def _complete_service(self, request: Request) -> None:
        start_s, prefill_s, decode_s, model_id = self._started.pop(request.request_id)
        slot = self._slots[model_id]
        slot.state = SlotState.IDLE
        slot.last_used_s = self.clock

        load_wait_s = self._load_wait.pop(request.request_id, 0.0)
        ttft_s = (start_s - request.arrival_time_s) + prefill_s
        self._outcomes[request.request_id] = RequestOutcome(
            request_id=request.request_id,
            task_class=request.task_class,
            model_id=model_id,
            cold_start=request.request_id in self._cold,
            queue_wait_s=max(0.0, start_s - request.arrival_time_s - load_wait_s),
            load_wait_s=load_wait_s,
            ttft_s=ttft_s,
            e2e_s=ttft_s + decode_s,
            prefill_s=prefill_s,
            decode_s=decode_s,
            service_start_s=start_s,
        )

    def _check_residency(self) -> None:
        if len(self._slots) > self.cluster.capacity:
            raise ResidencyOverflowError(self.clock, len(self._slots), self.cluster.capacity)

    def _report(self) -> SimulationReport:
        counters = SimulationCounters(
            hits=self._hits,
            misses=self._misses,
            evictions=self._evictions,
            loads=self._loads,
            load_overhead_s=self._load_overhead_s,
        )
        run_meta: dict[str, Any] = {
            "variant": self.cfg.variant.value,
            "variant_title": self.cfg.variant.title,
            "pattern": self.trace.pattern.value,
            "seed": self.trace.seed,
            "num_accelerators": self.cluster.num_accelerators,
            "window_length": self.cfg.window_length,
            "p1_mode": self.cfg.p1_mode.value,
            "w1": self.cfg.w1,
            "config_hash": config_hash(self.trace, self.cluster, self.cfg),
        }
        outcomes = tuple(self._outcomes[i] for i in sorted(self._outcomes))
        return SimulationReport(counters=counters, outcomes=outcomes, run_meta=run_meta)


def run(
    trace: Trace,
    catalog: ModelCatalog,
    cluster: ClusterConfig,
    policy: EvictionPolicy,
    cfg: PolicyConfig | None = None,
) -> SimulationReport:
    """Replay `trace` on `cluster` under `policy` and report every request's outcome."""
    with RunContext(trace.pattern.value, policy.config.variant.value, trace.seed):
        report = Simulator(trace, catalog, cluster, policy, cfg).run()
        counters = report.counters
        logger.info(
            "served %d requests: hits=%d misses=%d evictions=%d load_overhead=%.2fs",
            report.total_requests,
            counters.hits,
            counters.misses,
            counters.evictions,
            counters.load_overhead_s,
        )
    return report


def report_to_dict(report: SimulationReport) -> dict[str, Any]:
    return {
        "report_version": REPORT_VERSION,
        "run_meta": report.run_meta,
        "counters": asdict(report.counters),
        "outcomes": [{**asdict(o), "task_class": o.task_class.value} for o in report.outcomes],
    }


def save_report(report: SimulationReport) -> bytes:
    return (json.dumps(report_to_dict(report), indent=2) + "\n").encode("utf-8")


def load_report(data: bytes | str) -> SimulationReport:
    try:
        doc: Any = json.loads(decode_document(data))
    except json.JSONDecodeError as err:
        raise ReportParseError(err.msg, line=err.lineno) from err

    if not isinstance(doc, dict) or doc.get("report_version") != REPORT_VERSION:
        raise ReportParseError("missing or unsupported report_version")

    try:
        counters = SimulationCounters(**doc["counters"])
        outcomes = tuple(
            RequestOutcome(**{**raw, "task_class": TaskClass(raw["task_class"])}) for raw in doc["outcomes"]
        )
        run_meta: dict[str, Any] = dict(doc.get("run_meta", {}))
    except (KeyError, TypeError, ValueError) as err:
        raise ReportParseError(str(err)) from err

    return SimulationReport(counters=counters, outcomes=outcomes, run_meta=run_meta)
