"""Eviction policies: the context-aware eviction score, its ablations, and LRU.

A context-aware policy scores every idle resident model and evicts the one
with the highest score. The score sums four factors:

- P1 recency: `1 - 1/(1 + ln t)` (prose-consistent) or `1/(1 + ln t)` (verbatim),
  with `t = max(clock - last_used_s, 1)`.
- P2 reload cost: `1/(1 + l/100)` for load time `l` seconds.
- P3 future demand: `i/w` for the model's 0-based index `i` in the
  deduplicated lookahead window of length `w`, or 1 when absent.
- P4 task criticality: `w1 * o / normalizer` for the model's expected output tokens `o`.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from enum import StrEnum
from typing import TYPE_CHECKING

from .errors import ClockOrderError, PolicyConfigError, UnknownVariantError

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Iterable, Sequence

    from .catalog import ModelCatalog, ModelDescriptor


class Factor(StrEnum):
    RECENCY = "p1"
    RELOAD_COST = "p2"
    FUTURE_DEMAND = "p3"
    TASK_CRITICALITY = "p4"


class Variant(StrEnum):
    LRU = "lru"
    CACE_FULL = "cace"
    CACE_MINUS_P1 = "cace-p1"
    CACE_MINUS_P2 = "cace-p2"
    CACE_MINUS_P3 = "cace-p3"
    CACE_MINUS_P4 = "cace-p4"

    @classmethod
    def parse(cls, name: Variant | str) -> Variant:
        try:
            return cls(name)
        except ValueError as err:
            raise UnknownVariantError(str(name), [v.value for v in cls]) from err

    @property
    def disabled_factor(self) -> Factor | None:
        if self.value.startswith("cace-"):
            return Factor(self.value.removeprefix("cace-"))
        return None

    @property
    def title(self) -> str:
        """CamelCase name used in reports, e.g. `CaceMinusP4`."""
        if self is Variant.LRU:
            return "LRU"
        if factor := self.disabled_factor:
            return f"CaceMinus{factor.value.upper()}"
        return "CaceFull"


class P1Mode(StrEnum):
    PROSE = "prose"
    VERBATIM = "verbatim"


@dataclass(frozen=True)
class ResidencyEntry:
    model_id: str
    last_used_s: float
    busy: bool = False


@dataclass(frozen=True)
class ResidencySet:
    entries: tuple[ResidencyEntry, ...]
    capacity: int

    def __post_init__(self) -> None:
        if len(self.entries) > self.capacity:
            raise PolicyConfigError(f"{len(self.entries)} residents exceed capacity {self.capacity}")
        ids = [e.model_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise PolicyConfigError("resident model ids must be distinct")

    @property
    def idle(self) -> list[ResidencyEntry]:
        return [e for e in self.entries if not e.busy]


@dataclass(frozen=True)
class LookaheadWindow:
    length: int
    model_ids: tuple[str, ...] = ()

    def index_of(self, model_id: str) -> int | None:
        try:
            return self.model_ids.index(model_id)
        except ValueError:
            return None


@dataclass(frozen=True)
class PolicyConfig:
    variant: Variant = Variant.CACE_FULL
    w1: float = 1.0
    window_length: int = 10
    output_token_normalizer: int | None = None
    p1_mode: P1Mode = P1Mode.PROSE

    def __post_init__(self) -> None:
        if not self.w1 >= 0:
            raise PolicyConfigError(f"w1 must be >= 0, got {self.w1!r}")
        if self.window_length < 1:
            raise PolicyConfigError(f"window_length must be >= 1, got {self.window_length!r}")
        if self.output_token_normalizer is not None and self.output_token_normalizer <= 0:
            raise PolicyConfigError(f"output_token_normalizer must be > 0, got {self.output_token_normalizer!r}")

    @property
    def enabled_factors(self) -> frozenset[Factor]:
        if self.variant is Variant.LRU:
            return frozenset()
        disabled = self.variant.disabled_factor
        return frozenset(f for f in Factor if f is not disabled)

    def resolve(self, catalog: ModelCatalog) -> PolicyConfig:
        """Fill in the default normalizer: the catalog's largest expected output."""
        if self.output_token_normalizer is not None:
            return self
        return replace(self, output_token_normalizer=catalog.max_expected_output_tokens)


@dataclass(frozen=True)
class ScoreBreakdown:
    model_id: str
    p1_recency: float
    p2_reload: float
    p3_future: float
    p4_criticality: float
    total: float


def dedup_window(pending_model_ids: Iterable[str], length: int) -> LookaheadWindow:
    """Deduplicate the first `length` pending model ids, keeping first occurrences."""
    if length < 1:
        raise PolicyConfigError(f"window length must be >= 1, got {length!r}")

    head: list[str] = []
    for n, model_id in enumerate(pending_model_ids):
        if n >= length:
            break
        head.append(model_id)
    return LookaheadWindow(length=length, model_ids=tuple(dict.fromkeys(head)))


def recency_term(elapsed_s: float, mode: P1Mode) -> float:
    t = max(elapsed_s, 1.0)
    inverse = 1.0 / (1.0 + math.log(t))
    return inverse if mode is P1Mode.VERBATIM else 1.0 - inverse


def reload_term(load_time_s: float) -> float:
    return 1.0 / (1.0 + load_time_s / 100.0)


def future_term(window: LookaheadWindow, model_id: str) -> float:
    index = window.index_of(model_id)
    return 1.0 if index is None else index / window.length


def eviction_score(
    entry: ResidencyEntry,
    descriptor: ModelDescriptor,
    window: LookaheadWindow,
    clock: float,
    cfg: PolicyConfig,
) -> ScoreBreakdown:
    """Score one resident model; higher means evicted sooner.

    Args:
        entry: The resident's residency record.
        descriptor: The resident's catalog entry (load time, expected output tokens).
        window: Deduplicated lookahead window of pending models.
        clock: Current simulated time, no earlier than `entry.last_used_s`.
        cfg: Policy configuration with a resolved output-token normalizer.

    Returns:
        Every factor's contribution; factors disabled by the variant are 0.
    """
    if clock < entry.last_used_s:
        raise ClockOrderError(entry.model_id, clock, entry.last_used_s)
    if cfg.output_token_normalizer is None:
        raise PolicyConfigError("output_token_normalizer is unresolved, call PolicyConfig.resolve(catalog) first")

    enabled = cfg.enabled_factors
    p1 = recency_term(clock - entry.last_used_s, cfg.p1_mode) if Factor.RECENCY in enabled else 0.0
    p2 = reload_term(descriptor.load_time_s) if Factor.RELOAD_COST in enabled else 0.0
    p3 = future_term(window, entry.model_id) if Factor.FUTURE_DEMAND in enabled else 0.0
    p4 = (
        cfg.w1 * (descriptor.expected_output_tokens / cfg.output_token_normalizer)
        if Factor.TASK_CRITICALITY in enabled
        else 0.0
    )

    return ScoreBreakdown(
        model_id=entry.model_id,
        p1_recency=p1,
        p2_reload=p2,
        p3_future=p3,
        p4_criticality=p4,
        total=p1 + p2 + p3 + p4,
    )


def score_residents(
    residency: ResidencySet,
    window: LookaheadWindow,
    catalog: ModelCatalog,
    clock: float,
    cfg: PolicyConfig,
) -> list[tuple[ResidencyEntry, ScoreBreakdown]]:
    """Score idle residents, oldest first."""
    cfg = cfg.resolve(catalog)
    idle = sorted(residency.idle, key=lambda e: (e.last_used_s, e.model_id))
    return [(e, eviction_score(e, catalog.get(e.model_id), window, clock, cfg)) for e in idle]


def _least_recent(entries: Sequence[ResidencyEntry]) -> ResidencyEntry | None:
    return min(entries, key=lambda e: (e.last_used_s, e.model_id), default=None)


def select_victim(
    residency: ResidencySet,
    window: LookaheadWindow,
    catalog: ModelCatalog,
    clock: float,
    cfg: PolicyConfig,
) -> str | None:
    """Pick the idle resident to evict, or None when every resident is busy.

    Ties on the total break toward the older `last_used_s`, then the smaller model id.
    """
    if cfg.variant is Variant.LRU:
        victim = _least_recent(residency.idle)
        return victim.model_id if victim else None

    scored = score_residents(residency, window, catalog, clock, cfg)
    if not scored:
        return None

    entry, _ = min(scored, key=lambda pair: (-pair[1].total, pair[0].last_used_s, pair[0].model_id))
    return entry.model_id


class EvictionPolicy(ABC):
    """A pure decision function over a residency snapshot."""

    def __init__(self, config: PolicyConfig) -> None:
        self.config = config

    @property
    def variant(self) -> Variant:
        return self.config.variant

    @abstractmethod
    def select_victim(
        self, residency: ResidencySet, window: LookaheadWindow, catalog: ModelCatalog, clock: float
    ) -> str | None:
        """Return the model id to evict, or None when no resident is evictable."""

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}({self.config!r})"


class LruPolicy(EvictionPolicy):
    """Evicts the least recently used idle model."""

    def select_victim(
        self, residency: ResidencySet, window: LookaheadWindow, catalog: ModelCatalog, clock: float
    ) -> str | None:
        victim = _least_recent(residency.idle)
        return victim.model_id if victim else None


class ContextAwarePolicy(EvictionPolicy):
    """Evicts the idle model with the highest eviction score."""

    def select_victim(
        self, residency: ResidencySet, window: LookaheadWindow, catalog: ModelCatalog, clock: float
    ) -> str | None:
        return select_victim(residency, window, catalog, clock, self.config)


def make_policy(cfg: PolicyConfig) -> EvictionPolicy:
    if cfg.variant is Variant.LRU:
        return LruPolicy(cfg)
    return ContextAwarePolicy(cfg)
