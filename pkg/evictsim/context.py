from __future__ import annotations

import logging
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:  # pragma: no cover
    from contextvars import Token

# Tracks the simulation run currently executing in this thread or task.
# Default is None outside of a run.
current_run: ContextVar[RunContext | None] = ContextVar("__evictsim_current_run__", default=None)


@dataclass(frozen=True)
class RunContext:
    """Identifies one simulation run (pattern, variant, seed) for log correlation."""

    pattern: str
    variant: str
    seed: int | None = None
    _tokens: list[Token[RunContext | None]] = field(default_factory=list, compare=False, repr=False)

    @property
    def label(self) -> str:
        seed = "-" if self.seed is None else str(self.seed)
        return f"{self.pattern}/{self.variant}/{seed}"

    def __enter__(self) -> RunContext:
        self._tokens.append(current_run.set(self))
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        current_run.reset(self._tokens.pop())


class RunContextFilter(logging.Filter):
    """Adds the active run label to every record as `record.run`."""

    def filter(self, record: logging.LogRecord) -> bool:
        run = current_run.get()
        record.run = run.label if run else "-"
        return True
