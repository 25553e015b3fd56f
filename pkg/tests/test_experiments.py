from __future__ import annotations

import pytest

from evictsim.catalog import ModelCatalog, lookup
from evictsim.engine import save_report
from evictsim.errors import ExperimentConfigError
from evictsim.experiment import (
    CellResult,
    ExperimentConfig,
    Settings,
    build_table,
    load_experiment_config,
    run_grid,
)
from evictsim.metrics import ComparisonTable
from evictsim.policy import P1Mode, Variant
from evictsim.workload import PatternName

PATTERNS = [p.value for p in PatternName]


@pytest.fixture(scope="module")
def main_results(catalog: ModelCatalog) -> list[CellResult]:
    return run_grid(ExperimentConfig(), catalog, workers=1)


@pytest.fixture(scope="module")
def main_grid(main_results: list[CellResult]) -> ComparisonTable:
    return build_table(main_results, ExperimentConfig().baseline)


@pytest.fixture(scope="module")
def ablation_grid(catalog: ModelCatalog) -> ComparisonTable:
    config = ExperimentConfig.ablation()
    return build_table(run_grid(config, catalog, workers=1), config.baseline)


def _distinct_models_per_window(result: CellResult, catalog: ModelCatalog) -> list[int]:
    trace = result.trace
    seen: list[set[str]] = [set() for _ in range(trace.windows)]
    for request in trace.requests:
        window = min(int(request.arrival_time_s // trace.window_duration_s), trace.windows - 1)
        seen[window].add(lookup(catalog, request.language, request.task_class).model_id)
    return [len(models) for models in seen]


@pytest.mark.experiment
@pytest.mark.parametrize("pattern", PATTERNS)
def test_windows_request_more_models_than_fit(main_results: list[CellResult], catalog: ModelCatalog, pattern: str):
    """Test that each window of the default grid asks for at least 12 distinct models."""
    counts = [
        count
        for result in main_results
        if result.pattern.value == pattern and result.variant is Variant.LRU
        for count in _distinct_models_per_window(result, catalog)
    ]
    assert len(counts) == len(ExperimentConfig().seeds) * ExperimentConfig().windows
    assert sum(counts) / len(counts) >= 12


@pytest.mark.experiment
@pytest.mark.parametrize("pattern", PATTERNS)
def test_lookahead_beats_lru(main_grid: ComparisonTable, pattern: str):
    """Test that the score without task criticality hits more and loads less than LRU."""
    lru = main_grid.row(pattern, "lru").metrics
    cace_p4 = main_grid.row(pattern, "cace-p4").metrics
    assert cace_p4.cache_hit_rate > lru.cache_hit_rate
    assert cace_p4.load_overhead_s < lru.load_overhead_s


@pytest.mark.experiment
@pytest.mark.parametrize("pattern", ["ide-heavy", "popularity-skewed"])
def test_load_overhead_reduction_range(main_grid: ComparisonTable, pattern: str):
    """Test that the load-overhead reduction on skewed mixes is sizeable but not total."""
    reduction = main_grid.row(pattern, "cace-p4").deltas["load_overhead"]
    assert reduction is not None
    assert 0.10 <= reduction <= 0.60


@pytest.mark.experiment
@pytest.mark.parametrize("pattern", PATTERNS)
def test_full_score_beats_lru(main_grid: ComparisonTable, pattern: str):
    """Test that the full score hits more than LRU and serves Completion requests sooner."""
    lru = main_grid.row(pattern, "lru").metrics
    cace = main_grid.row(pattern, "cace").metrics

    assert cace.cache_hit_rate > lru.cache_hit_rate
    assert cace.ttft_completion is not None and lru.ttft_completion is not None
    assert cace.ttft_completion.mean_s < lru.ttft_completion.mean_s
    assert cace.ttft_completion.p95_s < lru.ttft_completion.p95_s


@pytest.mark.experiment
@pytest.mark.xfail(
    reason="on uniform the criticality term trades hits for cheaper reloads: cace-p4 hits about 0.02 more than cace",
    strict=False,
)
@pytest.mark.parametrize("pattern", PATTERNS)
def test_full_score_hit_rate_ordering(main_grid: ComparisonTable, pattern: str):
    """Test that adding task criticality never costs hit rate."""
    lru = main_grid.row(pattern, "lru").metrics
    cace_p4 = main_grid.row(pattern, "cace-p4").metrics
    cace = main_grid.row(pattern, "cace").metrics
    assert cace.cache_hit_rate >= cace_p4.cache_hit_rate >= lru.cache_hit_rate


@pytest.mark.experiment
@pytest.mark.xfail(
    reason="FIFO dispatch with a 10-request window cuts evictions to about 0.8x LRU; "
    "even farthest-next-use over the whole trace only reaches about 0.65x",
    strict=False,
)
def test_full_score_cuts_evictions(main_grid: ComparisonTable):
    """Test that the full score evicts at most 70% as often as LRU on some pattern."""
    ratios = [
        main_grid.row(p, "cace").metrics.mean_evictions / main_grid.row(p, "lru").metrics.mean_evictions for p in PATTERNS
    ]
    assert min(ratios) <= 0.7


def _ablation_drop(ablation_grid: ComparisonTable, variant: str) -> float:
    full = ablation_grid.row("popularity-skewed", "cace").metrics.cache_hit_rate
    return full - ablation_grid.row("popularity-skewed", variant).metrics.cache_hit_rate


@pytest.mark.experiment
def test_ablation_lookahead_matters_most_among_recency_and_reload(ablation_grid: ComparisonTable):
    """Test that dropping lookahead costs more hit rate than dropping recency or reload cost."""
    lookahead = _ablation_drop(ablation_grid, "cace-p3")
    assert lookahead > 0
    assert lookahead > max(_ablation_drop(ablation_grid, "cace-p1"), _ablation_drop(ablation_grid, "cace-p2"))


@pytest.mark.experiment
@pytest.mark.xfail(
    reason="labels are shuffled independently of time, so criticality moves hit rate by about 0.015 "
    "while lookahead moves it by about 0.09",
    strict=False,
)
def test_ablation_ordering(ablation_grid: ComparisonTable):
    """Test that dropping task criticality hurts most, then dropping lookahead."""
    drop = {v: _ablation_drop(ablation_grid, v) for v in ("cace-p1", "cace-p2", "cace-p3", "cace-p4")}
    assert drop["cace-p4"] >= drop["cace-p3"] > max(drop["cace-p1"], drop["cace-p2"])
    assert drop["cace-p4"] >= 0.05


def _small_config() -> ExperimentConfig:
    return ExperimentConfig(
        patterns=(PatternName.UNIFORM, PatternName.POPULARITY_SKEWED),
        variants=(Variant.LRU, Variant.CACE_FULL),
        seeds=(1, 2),
        rate=1.5,
        duration=10.0,
        windows=1,
    )


def _report_bytes(results: list[CellResult]) -> list[bytes]:
    return [save_report(r.report) for r in results]


def test_grid_is_deterministic(catalog: ModelCatalog):
    """Test that two grid executions produce byte-identical reports."""
    config = _small_config()
    assert _report_bytes(run_grid(config, catalog, workers=1)) == _report_bytes(run_grid(config, catalog, workers=1))


def test_grid_order(catalog: ModelCatalog):
    """Test that cells come back pattern-major, then variant, then seed."""
    results = run_grid(_small_config(), catalog, workers=1)
    labels = [(r.pattern.value, r.variant.value, r.seed) for r in results]
    assert labels[:4] == [("uniform", "lru", 1), ("uniform", "lru", 2), ("uniform", "cace", 1), ("uniform", "cace", 2)]
    assert len(labels) == 8


def test_process_pool_matches_serial(catalog: ModelCatalog, monkeypatch: pytest.MonkeyPatch):
    """Test that EVICTSIM_WORKERS > 1 gives the same reports in the same order."""
    monkeypatch.setenv("EVICTSIM_WORKERS", "2")
    Settings.reset()
    assert Settings.get_workers() == 2

    config = _small_config()
    assert _report_bytes(run_grid(config, catalog)) == _report_bytes(run_grid(config, catalog, workers=1))


def test_workers_env_must_be_integer(monkeypatch: pytest.MonkeyPatch):
    """Test that a non-numeric worker count is a configuration error."""
    monkeypatch.setenv("EVICTSIM_WORKERS", "many")
    with pytest.raises(ExperimentConfigError):
        Settings.get_workers()


def test_seed_averaging(catalog: ModelCatalog):
    """Test that each cell averages one run per seed."""
    table = build_table(run_grid(_small_config(), catalog, workers=1), Variant.LRU)
    assert len(table.rows) == 4
    single = build_table(run_grid(_small_config().with_overrides(seeds=(1,)), catalog, workers=1), Variant.LRU)
    assert single.row("uniform", "lru").metrics.total_requests < table.row("uniform", "lru").metrics.total_requests


@pytest.mark.parametrize(
    "kwargs",
    [{"patterns": ()}, {"variants": ()}, {"seeds": ()}, {"rate": 0.0}, {"window_length": 0}, {"baseline": Variant.CACE_FULL, "variants": (Variant.LRU,)}],
)
def test_config_validation(kwargs: dict[str, object]):
    """Test that invalid experiment configs are rejected."""
    with pytest.raises(ExperimentConfigError):
        ExperimentConfig(**kwargs)  # pyright: ignore[reportArgumentType]


def test_ablation_config():
    """Test the ablation grid defaults."""
    config = ExperimentConfig.ablation()
    assert config.patterns == (PatternName.POPULARITY_SKEWED,)
    assert config.baseline is Variant.CACE_FULL
    assert len(config.variants) == 5


def test_load_yaml_manifest():
    """Test every manifest key type."""
    config = load_experiment_config(
        "patterns: uniform, ide-heavy\n"
        "variants: [lru, cace-p3]\n"
        "seeds: [7]\n"
        "rate: 3\n"
        "windows: 2\n"
        "w1: 0.5\n"
        "window_length: 4\n"
        "p1_mode: verbatim\n"
        "token_params:\n"
        "  output_distribution: lognormal\n"
    )
    assert config.patterns == (PatternName.UNIFORM, PatternName.IDE_HEAVY)
    assert config.variants == (Variant.LRU, Variant.CACE_MINUS_P3)
    assert config.seeds == (7,)
    assert (config.rate, config.windows, config.w1, config.window_length) == (3.0, 2, 0.5, 4)
    assert config.p1_mode is P1Mode.VERBATIM
    assert config.token_params.output_distribution.value == "lognormal"


def test_load_json_manifest():
    """Test that JSON manifests parse and pick the first variant as baseline when LRU is absent."""
    config = load_experiment_config(b'{"variants": ["cace", "cace-p4"]}')
    assert config.baseline is Variant.CACE_FULL


@pytest.mark.parametrize("text", ["- a\n- b\n", "colour: blue\n", "rate: fast\n", "patterns: [bursty]\n", "rate: [\n"])
def test_bad_manifest(text: str):
    """Test that malformed manifests are configuration errors."""
    with pytest.raises(ExperimentConfigError):
        load_experiment_config(text)
