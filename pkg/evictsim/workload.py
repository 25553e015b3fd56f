"""Request traces: Poisson arrivals, quota-exact labelling, JSON-lines files."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING, Any

import numpy as np

from .catalog import Language, TaskClass, decode_document, lookup
from .errors import (
    ArrivalRateError,
    TraceParseError,
    TraceValidationError,
    UnknownPatternError,
)

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Mapping, Sequence

    from .catalog import ModelCatalog

TRACE_VERSION = 1
SEED_MASK = (1 << 64) - 1

# Stream ids for derived generators; one per concern so that changing one
# draw never shifts another.
_ARRIVAL_STREAM = 0
_LABEL_STREAM = 1
_TOKEN_STREAM = 2


class PatternName(StrEnum):
    UNIFORM = "uniform"
    IDE_HEAVY = "ide-heavy"
    POPULARITY_SKEWED = "popularity-skewed"


class OutputDistribution(StrEnum):
    FIXED = "fixed"
    LOGNORMAL = "lognormal"


@dataclass(frozen=True)
class Request:
    request_id: int
    arrival_time_s: float
    language: Language
    task_class: TaskClass
    prompt_tokens: int
    output_tokens: int


@dataclass(frozen=True)
class WorkloadPattern:
    name: PatternName
    task_mix: Mapping[TaskClass, float]
    language_mix: Mapping[Language, float]


_UNIFORM_LANGUAGES = {language: 1 / len(Language) for language in Language}

PATTERNS: dict[PatternName, WorkloadPattern] = {
    PatternName.UNIFORM: WorkloadPattern(
        PatternName.UNIFORM,
        task_mix={TaskClass.COMPLETION: 0.5, TaskClass.REASONING: 0.5},
        language_mix=_UNIFORM_LANGUAGES,
    ),
    PatternName.IDE_HEAVY: WorkloadPattern(
        PatternName.IDE_HEAVY,
        task_mix={TaskClass.COMPLETION: 0.7, TaskClass.REASONING: 0.3},
        language_mix=_UNIFORM_LANGUAGES,
    ),
    PatternName.POPULARITY_SKEWED: WorkloadPattern(
        PatternName.POPULARITY_SKEWED,
        task_mix={TaskClass.COMPLETION: 0.7, TaskClass.REASONING: 0.3},
        language_mix={
            Language.JAVA: 0.2,
            Language.PYTHON: 0.2,
            Language.CPP: 0.2,
            Language.JAVASCRIPT: 0.2,
            Language.GO: 0.05,
            Language.RUST: 0.05,
            Language.C: 0.05,
            Language.CSHARP: 0.05,
        },
    ),
}


def get_pattern(name: PatternName | str) -> WorkloadPattern:
    try:
        return PATTERNS[PatternName(name)]
    except ValueError as err:
        raise UnknownPatternError(str(name), [p.value for p in PatternName]) from err


@dataclass(frozen=True)
class TokenParams:
    """Prompt/output token counts per task class."""

    completion_prompt_tokens: int = 256
    completion_output_tokens: int = 50
    reasoning_prompt_tokens: int = 512
    reasoning_output_tokens: int = 600
    completion_output_cap: int = 50
    output_distribution: OutputDistribution = OutputDistribution.FIXED
    lognormal_sigma: float = 0.5

    def prompt_tokens(self, task_class: TaskClass) -> int:
        if task_class is TaskClass.COMPLETION:
            return self.completion_prompt_tokens
        return self.reasoning_prompt_tokens

    def output_tokens(self, task_class: TaskClass) -> int:
        if task_class is TaskClass.COMPLETION:
            return min(self.completion_output_tokens, self.completion_output_cap)
        return self.reasoning_output_tokens


@dataclass(frozen=True)
class Trace:
    pattern: PatternName
    seed: int
    window_duration_s: float
    arrival_rate_per_s: float
    requests: tuple[Request, ...] = field(default=())
    windows: int = 1

    def __len__(self) -> int:
        return len(self.requests)


def derive_seed(seed: int, *streams: int) -> int:
    """Child seed for an independent random stream of `seed`."""
    state = np.random.SeedSequence([seed & SEED_MASK, *streams]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def generate_arrivals(rate: float, duration: float, seed: int) -> list[float]:
    """Poisson arrival times in [0, duration] with exponential(rate) gaps.

    Args:
        rate: Mean arrivals per second.
        duration: Window length in seconds.
        seed: Seed for the gap generator.

    Returns:
        Strictly increasing arrival times.
    """
    if not rate > 0:
        raise ArrivalRateError("rate", rate)
    if not duration >= 0:
        raise ArrivalRateError("duration", duration)

    rng = np.random.default_rng(seed & SEED_MASK)
    expected = rate * duration
    chunk = max(16, int(expected + 6 * math.sqrt(expected) + 16))

    times: list[float] = []
    clock = 0.0
    while True:
        gaps = rng.exponential(1.0 / rate, size=chunk)
        for gap in gaps:
            clock += float(gap)
            if clock > duration:
                return times
            # a zero gap would break strict ordering
            if times and clock <= times[-1]:
                continue
            times.append(clock)


def _largest_remainder(total: int, weights: Sequence[float]) -> list[int]:
    quotas = [total * w for w in weights]
    counts = [math.floor(q) for q in quotas]
    leftover = total - sum(counts)
    # round remainders so float noise cannot reorder genuine ties
    order = sorted(range(len(weights)), key=lambda i: (-round(quotas[i] - counts[i], 9), i))
    for i in order[: max(0, leftover)]:
        counts[i] += 1
    return counts


def label_quotas(n: int, pattern: WorkloadPattern) -> dict[tuple[TaskClass, Language], int]:
    """Exact per-(task_class, language) counts for `n` requests.

    Task classes are split first, then each class across languages, so the
    task split itself is exact to within one request.
    """
    tasks = list(pattern.task_mix)
    languages = list(pattern.language_mix)
    task_counts = _largest_remainder(n, [pattern.task_mix[t] for t in tasks])

    quotas: dict[tuple[TaskClass, Language], int] = {}
    for task_class, task_count in zip(tasks, task_counts, strict=True):
        per_language = _largest_remainder(task_count, [pattern.language_mix[lang] for lang in languages])
        for language, count in zip(languages, per_language, strict=True):
            quotas[task_class, language] = count
    return quotas


def assign_labels(n: int, pattern: WorkloadPattern, seed: int) -> list[tuple[Language, TaskClass]]:
    """Quota-exact labels in a seeded random order."""
    labels: list[tuple[Language, TaskClass]] = []
    for (task_class, language), count in label_quotas(n, pattern).items():
        labels.extend([(language, task_class)] * count)

    rng = np.random.default_rng(seed & SEED_MASK)
    order = rng.permutation(len(labels))
    return [labels[int(i)] for i in order]


def _sample_output_tokens(
    task_class: TaskClass, token_params: TokenParams, rng: np.random.Generator
) -> int:
    mean = token_params.output_tokens(task_class)
    if token_params.output_distribution is OutputDistribution.FIXED:
        return mean

    sigma = token_params.lognormal_sigma
    sample = int(round(float(rng.lognormal(math.log(mean) - sigma**2 / 2, sigma))))
    sample = max(1, sample)
    if task_class is TaskClass.COMPLETION:
        sample = min(sample, token_params.completion_output_cap)
    return sample


def build_trace(
    pattern: WorkloadPattern | PatternName | str,
    rate: float,
    duration: float,
    seed: int,
    catalog: ModelCatalog,
    token_params: TokenParams | None = None,
    windows: int = 1,
) -> Trace:
    """Generate a labelled, time-ordered trace over `windows` back-to-back windows."""
    if not isinstance(pattern, WorkloadPattern):
        pattern = get_pattern(pattern)
    token_params = token_params or TokenParams()
    if windows < 1:
        raise ArrivalRateError("windows", windows)

    arrivals: list[float] = []
    for w in range(windows):
        window_seed = derive_seed(seed, _ARRIVAL_STREAM, w)
        arrivals.extend(w * duration + t for t in generate_arrivals(rate, duration, window_seed))

    labels = assign_labels(len(arrivals), pattern, derive_seed(seed, _LABEL_STREAM))
    for language, task_class in set(labels):
        lookup(catalog, language, task_class)

    token_rng = np.random.default_rng(derive_seed(seed, _TOKEN_STREAM))
    requests = tuple(
        Request(
            request_id=i,
            arrival_time_s=arrival,
            language=language,
            task_class=task_class,
            prompt_tokens=token_params.prompt_tokens(task_class),
            output_tokens=_sample_output_tokens(task_class, token_params, token_rng),
        )
        for i, (arrival, (language, task_class)) in enumerate(zip(arrivals, labels, strict=True))
    )

    return Trace(
        pattern=pattern.name,
        seed=seed,
        window_duration_s=duration,
        arrival_rate_per_s=rate,
        requests=requests,
        windows=windows,
    )


def label_census(trace: Trace) -> Counter[tuple[TaskClass, Language]]:
    return Counter((r.task_class, r.language) for r in trace.requests)


def _request_to_dict(request: Request) -> dict[str, Any]:
    return {
        "request_id": request.request_id,
        "arrival_time_s": request.arrival_time_s,
        "language": request.language.value,
        "task_class": request.task_class.value,
        "prompt_tokens": request.prompt_tokens,
        "output_tokens": request.output_tokens,
    }


def trace_header(trace: Trace) -> dict[str, Any]:
    return {
        "trace_version": TRACE_VERSION,
        "pattern": trace.pattern.value,
        "seed": trace.seed,
        "rate": trace.arrival_rate_per_s,
        "duration": trace.window_duration_s,
        "windows": trace.windows,
    }


def serialize_trace(trace: Trace) -> bytes:
    lines = [json.dumps(trace_header(trace), separators=(",", ":"))]
    lines.extend(json.dumps(_request_to_dict(r), separators=(",", ":")) for r in trace.requests)
    return ("\n".join(lines) + "\n").encode("utf-8")


def _load_line(line: str, lineno: int) -> dict[str, Any]:
    try:
        record: Any = json.loads(line)
    except json.JSONDecodeError as err:
        raise TraceParseError(err.msg, line=lineno) from err
    if not isinstance(record, dict):
        raise TraceParseError("record is not an object", line=lineno)
    return record  # pyright: ignore[reportUnknownVariableType]


def _parse_header(record: dict[str, Any]) -> tuple[PatternName, int, float, float, int]:
    if record.get("trace_version") != TRACE_VERSION:
        raise TraceParseError("missing or unsupported trace header", line=1)

    try:
        pattern = PatternName(record["pattern"])
        seed = int(record["seed"])
        rate = float(record["rate"])
        duration = float(record["duration"])
        windows = int(record.get("windows", 1))
    except (KeyError, ValueError, TypeError) as err:
        raise TraceParseError(f"bad header field: {err}", line=1) from err

    if rate <= 0 or duration < 0 or windows < 1:
        raise TraceValidationError("header rate, duration or windows out of range", line=1)
    return pattern, seed, rate, duration, windows


def _parse_request(record: dict[str, Any], lineno: int, horizon: float) -> Request:
    try:
        request = Request(
            request_id=int(record["request_id"]),
            arrival_time_s=float(record["arrival_time_s"]),
            language=Language(record["language"]),
            task_class=TaskClass(record["task_class"]),
            prompt_tokens=int(record["prompt_tokens"]),
            output_tokens=int(record["output_tokens"]),
        )
    except (KeyError, ValueError, TypeError) as err:
        raise TraceParseError(f"bad request record: {err}", line=lineno) from err

    if not 0 <= request.arrival_time_s <= horizon:
        raise TraceValidationError(f"arrival_time_s {request.arrival_time_s!r} outside [0, {horizon!r}]", line=lineno)
    if request.prompt_tokens <= 0 or request.output_tokens <= 0:
        raise TraceValidationError("token counts must be positive", line=lineno)
    return request


def parse_trace(data: bytes | str) -> Trace:
    """Parse a JSON-lines trace; the first line must be the header record."""
    lines = [(n, line) for n, line in enumerate(decode_document(data).splitlines(), start=1) if line.strip()]
    if not lines:
        raise TraceParseError("empty trace, missing header", line=1)

    first_no, first = lines[0]
    header = _load_line(first, first_no)
    if "trace_version" not in header:
        raise TraceParseError("missing header", line=first_no)
    pattern, seed, rate, duration, windows = _parse_header(header)

    requests: list[Request] = []
    for lineno, line in lines[1:]:
        request = _parse_request(_load_line(line, lineno), lineno, duration * windows)
        if requests:
            previous = requests[-1]
            if request.arrival_time_s < previous.arrival_time_s:
                raise TraceValidationError("requests are not sorted by arrival time", line=lineno)
            if request.request_id <= previous.request_id:
                raise TraceValidationError(
                    f"request_id {request.request_id} does not increase after {previous.request_id}", line=lineno
                )
        requests.append(request)

    return Trace(
        pattern=pattern,
        seed=seed,
        window_duration_s=duration,
        arrival_rate_per_s=rate,
        requests=tuple(requests),
        windows=windows,
    )
