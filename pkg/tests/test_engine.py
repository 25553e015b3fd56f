from __future__ import annotations

from dataclasses import replace
from typing import TYPE_CHECKING

import numpy as np
import pytest

from evictsim.catalog import Language, ModelCatalog, TaskClass, lookup
from evictsim.engine import ClusterConfig, load_report, run, save_report, service_times, snapshot_window
from evictsim.errors import ClusterConfigError, PolicyConfigError, ReportParseError, SimulationDeadlockError
from evictsim.policy import EvictionPolicy, LookaheadWindow, PolicyConfig, ResidencySet, Variant, make_policy
from evictsim.workload import Request, Trace

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Callable, Sequence

    TraceFactory = Callable[[Sequence[tuple[float, Language, TaskClass]]], Trace]

C, R = TaskClass.COMPLETION, TaskClass.REASONING

PREFILL_C = 256 / 4096
DECODE_C = 50 / 200


def _run(trace: Trace, catalog: ModelCatalog, variant: Variant = Variant.CACE_FULL, accelerators: int = 4, **kw: float):
    cfg = PolicyConfig(variant=variant).resolve(catalog)
    cluster = ClusterConfig(num_accelerators=accelerators, **kw)  # pyright: ignore[reportArgumentType]
    return run(trace, catalog, cluster, make_policy(cfg), cfg)


def _request(language: Language, task_class: TaskClass, request_id: int = 0) -> Request:
    return Request(request_id, 0.0, language, task_class, prompt_tokens=256, output_tokens=0)


def test_service_times(catalog: ModelCatalog):
    """Test prefill and decode durations against hand arithmetic."""
    descriptor = replace(lookup(catalog, Language.GO, C), prefill_rate_tps=1024.0)
    request = replace(_request(Language.GO, C), output_tokens=50)
    prefill, decode = service_times(request, descriptor)
    assert prefill == pytest.approx(0.25)
    assert decode == pytest.approx(0.25)

    faster = replace(descriptor, decode_rate_tps=400.0)
    assert service_times(request, faster)[1] == pytest.approx(decode / 2)


def test_service_times_clamps_empty_output(catalog: ModelCatalog):
    """Test that a zero-token output still costs one decode step."""
    descriptor = lookup(catalog, Language.GO, C)
    assert service_times(_request(Language.GO, C), descriptor)[1] == pytest.approx(1 / 200)


def test_cluster_config_validation():
    """Test that impossible cluster shapes are rejected."""
    with pytest.raises(ClusterConfigError):
        ClusterConfig(num_accelerators=0)
    with pytest.raises(ClusterConfigError):
        ClusterConfig(models_per_accelerator=2)
    with pytest.raises(ClusterConfigError):
        ClusterConfig(unload_time_s=-1.0)


def test_single_request_cold_start(catalog: ModelCatalog, make_trace: TraceFactory):
    """Test the closed form for one request on an empty cluster."""
    report = _run(make_trace([(0.0, Language.PYTHON, C)]), catalog)
    (outcome,) = report.outcomes

    assert outcome.cold_start
    assert outcome.load_wait_s == pytest.approx(1.5)
    assert outcome.queue_wait_s == pytest.approx(0.0)
    assert outcome.ttft_s == pytest.approx(1.5 + PREFILL_C)
    assert outcome.e2e_s == pytest.approx(1.5 + PREFILL_C + DECODE_C)
    assert (report.counters.hits, report.counters.misses) == (0, 1)
    assert report.counters.load_overhead_s == pytest.approx(1.5)


def test_back_to_back_same_model(catalog: ModelCatalog, make_trace: TraceFactory):
    """Test that a second request for a loading model is a hit served after the first."""
    report = _run(make_trace([(0.0, Language.PYTHON, C), (0.1, Language.PYTHON, C)]), catalog)
    first, second = report.outcomes

    assert (report.counters.hits, report.counters.misses) == (1, 1)
    assert report.counters.loads == 1
    assert report.counters.load_overhead_s == pytest.approx(1.5)
    assert not second.cold_start
    assert second.load_wait_s == 0.0
    assert second.service_start_s == pytest.approx(first.service_start_s + PREFILL_C + DECODE_C)
    assert second.ttft_s == pytest.approx(1.5 + PREFILL_C + DECODE_C - 0.1 + PREFILL_C)


def test_unload_time_delays_load(catalog: ModelCatalog, make_trace: TraceFactory):
    """Test that unloading a victim delays the replacement load but is not load overhead."""
    trace = make_trace([(0.0, Language.GO, C), (10.0, Language.JAVA, C)])
    report = _run(trace, catalog, accelerators=1, unload_time_s=2.0)
    second = report.outcomes[1]

    assert report.counters.evictions == 1
    assert report.counters.load_overhead_s == pytest.approx(3.0)
    assert second.load_wait_s == pytest.approx(3.5)
    assert second.ttft_s == pytest.approx(3.5 + PREFILL_C)


def test_snapshot_window(catalog: ModelCatalog, make_trace: TraceFactory):
    """Test that the window maps pending requests to deduplicated model ids."""
    trace = make_trace([(0.0, Language.JAVA, C), (0.0, Language.JAVA, C), (0.0, Language.PYTHON, R)])
    assert snapshot_window(trace.requests, 10, catalog).model_ids == ("java-completion", "python-reasoning")
    assert snapshot_window(trace.requests, 1, catalog).model_ids == ("java-completion",)
    assert snapshot_window([], 10, catalog).model_ids == ()


@pytest.mark.parametrize("variant", list(Variant))
def test_capacity_sufficient_closed_form(catalog: ModelCatalog, make_trace: TraceFactory, variant: Variant):
    """Test that at most four distinct models never evict and miss once per model."""
    rng = np.random.default_rng(11)
    pairs = [(Language.GO, C), (Language.RUST, R), (Language.JAVA, C), (Language.C, R)]

    for _ in range(50):
        used = pairs[: int(rng.integers(1, 5))]
        times = np.sort(rng.uniform(0, 60, size=int(rng.integers(1, 40))))
        items = [(float(t), *used[int(rng.integers(0, len(used)))]) for t in times]
        report = _run(make_trace(items), catalog, variant)

        distinct = len({(lang, task) for _, lang, task in items})
        assert report.counters.evictions == 0
        assert report.counters.misses == distinct
        assert report.counters.hits == len(items) - distinct


def test_conservation_on_random_traces(catalog: ModelCatalog, make_trace: TraceFactory):
    """Test accounting identities over 1,000 random traces."""
    rng = np.random.default_rng(7)
    pairs = [(lang, task) for lang in Language for task in TaskClass]
    variants = list(Variant)

    for _ in range(1_000):
        n = int(rng.integers(1, 30))
        times = np.sort(rng.uniform(0, 20, size=n))
        items = [(float(t), *pairs[int(rng.integers(0, len(pairs)))]) for t in times]
        trace = make_trace(items)
        report = _run(trace, catalog, variants[int(rng.integers(0, len(variants)))])
        counters = report.counters

        assert [o.request_id for o in report.outcomes] == list(range(n))
        assert counters.hits + counters.misses == n
        assert counters.loads == counters.misses
        assert counters.evictions <= counters.misses

        cold_loads = sum(catalog.get(o.model_id).load_time_s for o in report.outcomes if o.cold_start)
        assert counters.load_overhead_s == pytest.approx(cold_loads)

        for outcome in report.outcomes:
            assert outcome.e2e_s == outcome.ttft_s + outcome.decode_s
            assert outcome.ttft_s >= outcome.prefill_s
            if not outcome.cold_start:
                assert outcome.load_wait_s == 0.0


def test_workload_is_policy_independent(catalog: ModelCatalog, make_trace: TraceFactory):
    """Test that every policy serves the same requests with the same attempt count."""
    rng = np.random.default_rng(3)
    pairs = [(lang, task) for lang in Language for task in TaskClass]
    items = [(float(t), *pairs[int(rng.integers(0, len(pairs)))]) for t in np.sort(rng.uniform(0, 30, size=80))]
    trace = make_trace(items)

    reports = [_run(trace, catalog, variant) for variant in Variant]
    totals = {r.counters.hits + r.counters.misses for r in reports}
    served = {tuple(o.request_id for o in r.outcomes) for r in reports}
    assert totals == {80}
    assert len(served) == 1


def test_report_is_deterministic(catalog: ModelCatalog, make_trace: TraceFactory):
    """Test that identical inputs give byte-identical reports."""
    items = [(0.5 * i, lang, TaskClass.REASONING if i % 3 else C) for i, lang in enumerate(list(Language) * 3)]
    trace = make_trace(items)
    assert save_report(_run(trace, catalog)) == save_report(_run(trace, catalog))


def test_report_meta(catalog: ModelCatalog, make_trace: TraceFactory):
    """Test that run metadata names the variant and a stable config hash."""
    trace = make_trace([(0.0, Language.GO, C)])
    report = _run(trace, catalog, Variant.CACE_MINUS_P4)
    assert report.run_meta["variant"] == "cace-p4"
    assert report.run_meta["variant_title"] == "CaceMinusP4"
    assert len(report.run_meta["config_hash"]) == 16
    assert report.run_meta["config_hash"] != _run(trace, catalog, Variant.LRU).run_meta["config_hash"]


def test_report_save_and_load(catalog: ModelCatalog, make_trace: TraceFactory):
    """Test that a saved report loads back unchanged."""
    trace = make_trace([(0.0, Language.GO, C), (1.0, Language.RUST, R), (2.0, Language.GO, C)])
    report = _run(trace, catalog)
    assert load_report(save_report(report)) == report


@pytest.mark.parametrize("data", [b"not json", b'{"report_version": 2}', b'{"report_version": 1, "counters": {}}'])
def test_load_report_errors(data: bytes):
    """Test that malformed reports are rejected."""
    with pytest.raises(ReportParseError):
        load_report(data)


class FarthestNextUse(EvictionPolicy):
    """Evicts the idle resident whose next request is furthest away."""

    def __init__(self, trace: Trace, catalog: ModelCatalog) -> None:
        super().__init__(PolicyConfig(variant=Variant.CACE_FULL))
        self.upcoming = [(r.arrival_time_s, lookup(catalog, r.language, r.task_class).model_id) for r in trace.requests]

    def select_victim(
        self, residency: ResidencySet, window: LookaheadWindow, catalog: ModelCatalog, clock: float
    ) -> str | None:
        def next_use(model_id: str) -> float:
            return min((t for t, m in self.upcoming if m == model_id and t > clock), default=float("inf"))

        idle = [e.model_id for e in residency.idle]
        return max(idle, key=lambda m: (next_use(m), m), default=None)


def test_lru_thrashes_on_cyclic_trace(catalog: ModelCatalog, make_trace: TraceFactory):
    """Test that LRU never hits on A,B,C,... with two slots while a farsighted policy does."""
    cycle = [Language.GO, Language.RUST, Language.JAVA]
    trace = make_trace([(10.0 * i, cycle[i % 3], C) for i in range(12)])
    cluster = ClusterConfig(num_accelerators=2)

    lru_cfg = PolicyConfig(variant=Variant.LRU)
    lru = run(trace, catalog, cluster, make_policy(lru_cfg), lru_cfg)
    assert lru.counters.hits == 0

    farsighted = run(trace, catalog, cluster, FarthestNextUse(trace, catalog))
    assert farsighted.counters.hits > 0


class NeverEvict(EvictionPolicy):
    def select_victim(
        self, residency: ResidencySet, window: LookaheadWindow, catalog: ModelCatalog, clock: float
    ) -> str | None:
        return None


def test_deadlock_is_detected(catalog: ModelCatalog, make_trace: TraceFactory):
    """Test that a stuck queue aborts instead of returning a partial report."""
    trace = make_trace([(0.0, Language.GO, C), (5.0, Language.JAVA, C)])
    with pytest.raises(SimulationDeadlockError):
        run(trace, catalog, ClusterConfig(num_accelerators=1), NeverEvict(PolicyConfig()))


def test_run_config_must_match_policy(catalog: ModelCatalog, make_trace: TraceFactory):
    """Test that a run config other than the policy's own is rejected."""
    trace = make_trace([(0.0, Language.GO, C)])
    cfg = PolicyConfig(variant=Variant.CACE_FULL, window_length=10).resolve(catalog)
    other = replace(cfg, window_length=3)
    with pytest.raises(PolicyConfigError):
        run(trace, catalog, ClusterConfig(), make_policy(cfg), other)

    report = run(trace, catalog, ClusterConfig(), make_policy(cfg), cfg)
    assert report.run_meta["window_length"] == 10
