from __future__ import annotations

import logging
from collections.abc import Callable, Sequence

import pytest

from evictsim.catalog import Language, ModelCatalog, TaskClass, build_default_catalog
from evictsim.experiment import Settings
from evictsim.workload import PatternName, Request, TokenParams, Trace

TraceFactory = Callable[[Sequence[tuple[float, Language, TaskClass]]], Trace]


@pytest.fixture(scope="session")
def catalog() -> ModelCatalog:
    return build_default_catalog()


@pytest.fixture
def make_trace() -> TraceFactory:
    """Build a trace from (arrival, language, task_class) triples with default token counts."""
    tokens = TokenParams()

    def factory(items: Sequence[tuple[float, Language, TaskClass]]) -> Trace:
        requests = tuple(
            Request(
                request_id=i,
                arrival_time_s=t,
                language=language,
                task_class=task_class,
                prompt_tokens=tokens.prompt_tokens(task_class),
                output_tokens=tokens.output_tokens(task_class),
            )
            for i, (t, language, task_class) in enumerate(items)
        )
        horizon = max((t for t, _, _ in items), default=0.0)
        return Trace(
            pattern=PatternName.UNIFORM,
            seed=0,
            window_duration_s=horizon,
            arrival_rate_per_s=1.0,
            requests=requests,
        )

    return factory


@pytest.fixture(autouse=True)
def fresh_settings():
    Settings.reset()
    yield
    Settings.reset()
    package_logger = logging.getLogger("evictsim")
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
    package_logger.setLevel(logging.NOTSET)
