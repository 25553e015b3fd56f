"""Model registry and synthetic profiler.

The catalog plays the role of a profiler plus metadata store: every model is
registered once, profiled offline into a load time, and then looked up by
(language, task class) at serving time.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from enum import StrEnum
from functools import cached_property
from typing import TYPE_CHECKING, Any

from charset_normalizer import from_bytes

from .errors import (
    CatalogModelNotFoundError,
    CatalogParseError,
    CatalogValidationError,
    ProfileParamsError,
)

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Iterable, Mapping

CATALOG_VERSION = 1


class Language(StrEnum):
    JAVA = "Java"
    PYTHON = "Python"
    CPP = "Cpp"
    C = "C"
    GO = "Go"
    RUST = "Rust"
    CSHARP = "CSharp"
    JAVASCRIPT = "JavaScript"


class TaskClass(StrEnum):
    COMPLETION = "Completion"
    REASONING = "Reasoning"


@dataclass(frozen=True)
class ProfileParams:
    """Synthetic profiler knobs: how fast weights stream into accelerator memory."""

    staging_bandwidth_Bps: float = 2e9  # noqa: N815
    load_fixed_overhead_s: float = 1.0

    def __post_init__(self) -> None:
        if not self.staging_bandwidth_Bps > 0:
            raise ProfileParamsError("staging_bandwidth_Bps", self.staging_bandwidth_Bps)
        if not self.load_fixed_overhead_s >= 0:
            raise ProfileParamsError("load_fixed_overhead_s", self.load_fixed_overhead_s)


@dataclass(frozen=True)
class ModelDescriptor:
    model_id: str
    language: Language
    task_class: TaskClass
    param_count: int
    weight_bytes: int
    load_time_s: float
    prefill_rate_tps: float
    decode_rate_tps: float
    expected_output_tokens: int


@dataclass(frozen=True)
class ModelTemplate:
    """Per-task-class defaults used when building a catalog."""

    param_count: int
    prefill_rate_tps: float
    decode_rate_tps: float
    expected_output_tokens: int


DEFAULT_TEMPLATES: dict[TaskClass, ModelTemplate] = {
    TaskClass.COMPLETION: ModelTemplate(
        param_count=500_000_000, prefill_rate_tps=4096.0, decode_rate_tps=200.0, expected_output_tokens=50
    ),
    TaskClass.REASONING: ModelTemplate(
        param_count=7_000_000_000, prefill_rate_tps=2048.0, decode_rate_tps=800.0, expected_output_tokens=600
    ),
}

BYTES_PER_PARAM = 2


@dataclass(frozen=True)
class ModelCatalog:
    models: tuple[ModelDescriptor, ...]
    profile_params: ProfileParams = ProfileParams()

    def __post_init__(self) -> None:
        ids = [m.model_id for m in self.models]
        if any(not i for i in ids):
            raise CatalogValidationError("model_id must be a non-empty string")
        if duplicates := sorted({i for i in ids if ids.count(i) > 1}):
            raise CatalogValidationError(f"duplicate model_id {', '.join(duplicates)}")

        pairs = [(m.language, m.task_class) for m in self.models]
        if len(set(pairs)) != len(pairs):
            raise CatalogValidationError("more than one model registered for a (language, task_class) pair")

        for m in self.models:
            if not m.load_time_s > 0:
                raise CatalogValidationError(f"model '{m.model_id}' has non-positive load_time_s {m.load_time_s!r}")
            if m.prefill_rate_tps <= 0 or m.decode_rate_tps <= 0:
                raise CatalogValidationError(f"model '{m.model_id}' has a non-positive throughput")
            if m.expected_output_tokens <= 0:
                raise CatalogValidationError(f"model '{m.model_id}' has non-positive expected_output_tokens")

        completion = [m.param_count for m in self.models if m.task_class is TaskClass.COMPLETION]
        reasoning = [m.param_count for m in self.models if m.task_class is TaskClass.REASONING]
        if completion and reasoning and max(completion) >= min(reasoning):
            raise CatalogValidationError("every Completion model must be smaller than every Reasoning model")

    @cached_property
    def _by_pair(self) -> dict[tuple[Language, TaskClass], ModelDescriptor]:
        return {(m.language, m.task_class): m for m in self.models}

    @cached_property
    def _by_id(self) -> dict[str, ModelDescriptor]:
        return {m.model_id: m for m in self.models}

    @property
    def model_ids(self) -> list[str]:
        return [m.model_id for m in self.models]

    @property
    def max_expected_output_tokens(self) -> int:
        return max((m.expected_output_tokens for m in self.models), default=1)

    def lookup(self, language: Language | str, task_class: TaskClass | str) -> ModelDescriptor:
        return lookup(self, language, task_class)

    def get(self, model_id: str) -> ModelDescriptor:
        try:
            return self._by_id[model_id]
        except KeyError as err:
            raise CatalogModelNotFoundError(f"model_id '{model_id}'") from err

    def __len__(self) -> int:
        return len(self.models)


def profile_model(descriptor: ModelDescriptor, params: ProfileParams) -> ModelDescriptor:
    """Derive a model's load time from its weight size.

    Args:
        descriptor: The model to profile; only `load_time_s` is replaced.
        params: Staging bandwidth and fixed per-load overhead.

    Returns:
        A copy of the descriptor with `load_time_s = weight_bytes / bandwidth + overhead`.
    """
    if descriptor.weight_bytes <= 0:
        raise ProfileParamsError("weight_bytes", descriptor.weight_bytes)
    if params.staging_bandwidth_Bps <= 0:
        raise ProfileParamsError("staging_bandwidth_Bps", params.staging_bandwidth_Bps)

    load_time_s = descriptor.weight_bytes / params.staging_bandwidth_Bps + params.load_fixed_overhead_s
    return replace(descriptor, load_time_s=load_time_s)


def model_id_for(language: Language, task_class: TaskClass) -> str:
    return f"{language.value.lower()}-{task_class.value.lower()}"


def build_catalog(
    languages: Iterable[Language],
    params: ProfileParams | None = None,
    templates: Mapping[TaskClass, ModelTemplate] | None = None,
    bytes_per_param: int = BYTES_PER_PARAM,
) -> ModelCatalog:
    """Register and profile one model per (language, task class) pair."""
    params = params or ProfileParams()
    templates = templates or DEFAULT_TEMPLATES

    models: list[ModelDescriptor] = []
    for language in languages:
        for task_class in TaskClass:
            template = templates[task_class]
            unprofiled = ModelDescriptor(
                model_id=model_id_for(language, task_class),
                language=language,
                task_class=task_class,
                param_count=template.param_count,
                weight_bytes=template.param_count * bytes_per_param,
                load_time_s=0.0,
                prefill_rate_tps=template.prefill_rate_tps,
                decode_rate_tps=template.decode_rate_tps,
                expected_output_tokens=template.expected_output_tokens,
            )
            models.append(profile_model(unprofiled, params))

    return ModelCatalog(models=tuple(models), profile_params=params)


def build_default_catalog(params: ProfileParams | None = None) -> ModelCatalog:
    """The 8 languages x {Completion, Reasoning} catalog."""
    return build_catalog(list(Language), params)


def lookup(catalog: ModelCatalog, language: Language | str, task_class: TaskClass | str) -> ModelDescriptor:
    try:
        key = (Language(language), TaskClass(task_class))
    except ValueError as err:
        raise CatalogModelNotFoundError(f"({language}, {task_class})") from err
    try:
        return catalog._by_pair[key]  # pyright: ignore[reportPrivateUsage]
    except KeyError as err:
        raise CatalogModelNotFoundError(f"({key[0].value}, {key[1].value})") from err


def decode_document(data: bytes | str) -> str:
    """Decode raw file bytes, falling back to charset detection for non-UTF-8 input."""
    if isinstance(data, str):
        return data

    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        return str(from_bytes(data).best())


def catalog_to_dict(catalog: ModelCatalog) -> dict[str, Any]:
    return {
        "catalog_version": CATALOG_VERSION,
        "profile_params": asdict(catalog.profile_params),
        "models": [asdict(m) for m in catalog.models],
    }


def save_catalog(catalog: ModelCatalog) -> bytes:
    return (json.dumps(catalog_to_dict(catalog), indent=2) + "\n").encode("utf-8")


_DESCRIPTOR_TYPES: dict[str, type] = {
    "model_id": str,
    "language": str,
    "task_class": str,
    "param_count": int,
    "weight_bytes": int,
    "load_time_s": float,
    "prefill_rate_tps": float,
    "decode_rate_tps": float,
    "expected_output_tokens": int,
}


def _descriptor_from_dict(raw: Any, index: int) -> ModelDescriptor:
    if not isinstance(raw, dict):
        raise CatalogParseError(f"models[{index}] is not an object")

    values: dict[str, Any] = {}
    for f in fields(ModelDescriptor):
        if f.name not in raw:
            raise CatalogParseError(f"models[{index}] is missing a field", field=f.name)

        value: Any = raw[f.name]
        expected = _DESCRIPTOR_TYPES[f.name]
        # bool is an int subclass; reject it explicitly
        if isinstance(value, bool) or not isinstance(value, (int, float) if expected is float else expected):
            raise CatalogParseError(f"models[{index}] expected {expected.__name__}, got {value!r}", field=f.name)
        values[f.name] = float(value) if expected is float else value

    try:
        values["language"] = Language(values["language"])
        values["task_class"] = TaskClass(values["task_class"])
    except ValueError as err:
        raise CatalogParseError(f"models[{index}] {err}", field="language/task_class") from err

    return ModelDescriptor(**values)


def load_catalog(data: bytes | str) -> ModelCatalog:
    """Parse a catalog document written by `save_catalog`."""
    text = decode_document(data)
    try:
        doc: Any = json.loads(text)
    except json.JSONDecodeError as err:
        raise CatalogParseError(err.msg, line=err.lineno) from err

    if not isinstance(doc, dict):
        raise CatalogParseError("top-level value must be an object")
    if doc.get("catalog_version") != CATALOG_VERSION:
        raise CatalogParseError(f"unsupported version {doc.get('catalog_version')!r}", field="catalog_version")

    raw_params: Any = doc.get("profile_params", {})
    if not isinstance(raw_params, dict):
        raise CatalogParseError("profile_params must be an object", field="profile_params")
    try:
        params = ProfileParams(**raw_params)
    except TypeError as err:
        raise CatalogParseError(str(err), field="profile_params") from err

    raw_models: Any = doc.get("models")
    if not isinstance(raw_models, list):
        raise CatalogParseError("models must be a list", field="models")

    models = tuple(_descriptor_from_dict(raw, i) for i, raw in enumerate(raw_models))
    return ModelCatalog(models=models, profile_params=params)
