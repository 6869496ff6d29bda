"""JSON task configuration: strict parsing, serialization and file loading.

The document shape mirrors ``TaskConfig`` with two conveniences: solution
settings live under ``solution: {type, language}``, and stopping conditions
name their value by meaning (``n``, ``threshold`` or ``seconds``).  Variant
objects (generators, tests, evaluators) carry a ``kind`` discriminator.
Unknown keys are rejected with their full path.
"""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from pathlib import Path
from typing import Any, Union

from .model import (
    ChatHTTPGeneratorSpec,
    CodeExtractionTest,
    ExternalCheckTest,
    ExternalMetricEvaluator,
    Game2048Evaluator,
    KeywordTest,
    LLMJudgeEvaluator,
    ScriptedGeneratorSpec,
    SolutionType,
    StoppingSpec,
    TaskConfig,
)

GENERATORS = {"scripted": ScriptedGeneratorSpec, "chat_http": ChatHTTPGeneratorSpec}
TESTS = {"keyword": KeywordTest, "external_check": ExternalCheckTest, "code_extraction": CodeExtractionTest}
EVALUATORS = {"llm_judge": LLMJudgeEvaluator, "external_metric": ExternalMetricEvaluator, "game2048": Game2048Evaluator}
_VARIANTS = {id(v): table for table in (GENERATORS, TESTS, EVALUATORS) for v in table.values()}

STOPPING_VALUE_KEY = {
    "max_iterations": "n",
    "max_tokens": "n",
    "max_valid_iterations": "n",
    "max_consecutive_invalid": "n",
    "score_threshold": "threshold",
    "time_limit": "seconds",
}

TOP_LEVEL = (
    "prompts", "generator", "context_window", "tests", "analyzers", "evaluator",
    "stopping", "seed", "solution", "include_analysis_in_feedback", "clock",
)


class ConfigParseError(ValueError):
    """Malformed config document; the message starts with the offending path."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def _type_name(value) -> str:
    return "null" if value is None else type(value).__name__


def _decode(tp, value, path: str):
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None:
            if type(None) in args:
                return None
            raise ConfigParseError(path, "must not be null")
        members = [a for a in args if a is not type(None)]
        if len(members) == 1:
            return _decode(members[0], value, path)
        return _decode_variant(members, value, path)
    if value is None:
        raise ConfigParseError(path, "must not be null")
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigParseError(path, f"expected a list, got {_type_name(value)}")
        item = typing.get_args(tp)[0]
        return tuple(_decode(item, v, _join(path, i)) for i, v in enumerate(value))
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigParseError(path, f"expected an object, got {_type_name(value)}")
        return dict(value)
    if dataclasses.is_dataclass(tp):
        if id(tp) in _VARIANTS:
            return _decode_variant(list(_VARIANTS[id(tp)].values()), value, path)
        return _decode_dataclass(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigParseError(path, f"expected a boolean, got {_type_name(value)}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigParseError(path, f"expected an integer, got {_type_name(value)}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigParseError(path, f"expected a number, got {_type_name(value)}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigParseError(path, f"expected a string, got {_type_name(value)}")
        return value
    raise TypeError(f"no decoder for {tp!r}")


def _decode_variant(members, value, path: str):
    if not isinstance(value, dict):
        raise ConfigParseError(path, f"expected an object, got {_type_name(value)}")
    table = {m.__dataclass_fields__["kind"].default: m for m in members}
    kind = value.get("kind")
    if kind not in table:
        raise ConfigParseError(_join(path, "kind"), f"must be one of {sorted(table)}, got {kind!r}")
    body = {k: v for k, v in value.items() if k != "kind"}
    return _decode_dataclass(table[kind], body, path)


def _decode_dataclass(cls, value, path: str):
    if not isinstance(value, dict):
        raise ConfigParseError(path, f"expected an object, got {_type_name(value)}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    for key in value:
        if key not in fields:
            raise ConfigParseError(_join(path, key), "unknown key")
    kwargs = {}
    for name, f in fields.items():
        if name in value:
            kwargs[name] = _decode(hints[name], value[name], _join(path, name))
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigParseError(_join(path, name), "required key is missing")
    return cls(**kwargs)


def _decode_stopping(value, path: str) -> StoppingSpec:
    if not isinstance(value, dict):
        raise ConfigParseError(path, f"expected an object, got {_type_name(value)}")
    kind = value.get("kind")
    if kind not in STOPPING_VALUE_KEY:
        raise ConfigParseError(_join(path, "kind"), f"must be one of {list(STOPPING_VALUE_KEY)}, got {kind!r}")
    key = STOPPING_VALUE_KEY[kind]
    for k in value:
        if k not in ("kind", key):
            raise ConfigParseError(_join(path, k), "unknown key")
    if key not in value:
        raise ConfigParseError(_join(path, key), "required key is missing")
    return StoppingSpec(kind, _decode(float, value[key], _join(path, key)))


def config_from_dict(doc: Any) -> TaskConfig:
    """Build a ``TaskConfig`` from a parsed JSON document (structure only, no invariants)."""
    if not isinstance(doc, dict):
        raise ConfigParseError("", f"config must be a JSON object, got {_type_name(doc)}")
    for key in doc:
        if key not in TOP_LEVEL:
            raise ConfigParseError(key, "unknown key")
    for key in ("prompts", "generator", "stopping"):
        if key not in doc:
            raise ConfigParseError(key, "required key is missing")
    hints = typing.get_type_hints(TaskConfig)
    kwargs: dict[str, Any] = {}
    for key in ("prompts", "generator", "context_window", "tests", "analyzers", "evaluator", "seed",
                "include_analysis_in_feedback", "clock"):
        if key in doc:
            kwargs[key] = _decode(hints[key], doc[key], key)
    stopping = doc["stopping"]
    if not isinstance(stopping, list):
        raise ConfigParseError("stopping", f"expected a list, got {_type_name(stopping)}")
    kwargs["stopping"] = tuple(_decode_stopping(s, f"stopping[{i}]") for i, s in enumerate(stopping))
    if "solution" in doc:
        sol = doc["solution"]
        if not isinstance(sol, dict):
            raise ConfigParseError("solution", f"expected an object, got {_type_name(sol)}")
        for k in sol:
            if k not in ("type", "language"):
                raise ConfigParseError(f"solution.{k}", "unknown key")
        if "type" in sol:
            try:
                kwargs["solution_type"] = SolutionType(sol["type"])
            except ValueError:
                raise ConfigParseError(
                    "solution.type", f"must be one of {[t.value for t in SolutionType]}, got {sol['type']!r}"
                ) from None
        if sol.get("language") is not None:
            kwargs["language"] = _decode(str, sol["language"], "solution.language")
    return TaskConfig(**kwargs)


def _encode(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _encode(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, (tuple, list)):
        return [_encode(v) for v in value]
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    return value


def config_to_dict(config: TaskConfig) -> dict:
    """Inverse of ``config_from_dict``; every field is written out explicitly."""
    doc = {
        "prompts": _encode(config.prompts),
        "generator": _encode(config.generator),
        "context_window": config.context_window,
        "tests": _encode(config.tests),
        "analyzers": _encode(config.analyzers),
        "evaluator": _encode(config.evaluator),
        "stopping": [{"kind": s.kind, STOPPING_VALUE_KEY.get(s.kind, "value"): s.value} for s in config.stopping],
        "seed": config.seed,
        "solution": {"type": config.solution_type.value, "language": config.language},
        "include_analysis_in_feedback": config.include_analysis_in_feedback,
        "clock": config.clock,
    }
    return doc


def parse_config(text: str) -> TaskConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(doc)


def serialize_config(config: TaskConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2, ensure_ascii=False) + "\n"


def load_config(path) -> TaskConfig:
    """Read and parse a config file; errors carry the file path and the offending field."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(str(path), f"cannot read config: {exc.strerror or exc}") from exc
    try:
        return parse_config(text)
    except ConfigParseError as exc:
        where = f"{path}: {exc.path}" if exc.path else str(path)
        raise ConfigParseError(where, exc.message) from None
