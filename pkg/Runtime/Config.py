"""
Flat `key = value` experiment files.

    # comment
    reward = discern
    env.width = 8
    actor_epsilons = 0.4, 0.1

Dotted keys address nested sections. Unknown keys are errors, reported with
their line number; values are validated by ExperimentConfig.
"""

from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, get_args

from pydantic import BaseModel, ValidationError

from shared.errors import ConfigError
from shared.schemas import ExperimentConfig


def _field_model(model: type, key: str) -> Optional[type]:
    annotation = model.model_fields[key].annotation
    candidates = (annotation,) + get_args(annotation)
    for c in candidates:
        if isinstance(c, type) and issubclass(c, BaseModel):
            return c
    return None


def _check_key(parts: Tuple[str, ...], line: int) -> None:
    model = ExperimentConfig
    for i, part in enumerate(parts):
        if model is None or part not in model.model_fields:
            raise ConfigError(f"unknown key {'.'.join(parts)!r}", line)
        model = _field_model(model, part)
        if model is not None and i == len(parts) - 1:
            raise ConfigError(f"key {'.'.join(parts)!r} names a section, not a value", line)


def _value(raw: str) -> Any:
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if "," in raw:
        return [item.strip() for item in raw.split(",")]
    return raw


def parse_config_text(text: str) -> Dict[str, Any]:
    """Parse key = value lines into a nested mapping (values left as strings)."""
    out: Dict[str, Any] = {}
    seen = set()
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", number)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}", number)
        seen.add(key)
        parts = tuple(key.split("."))
        _check_key(parts, number)
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = _value(raw)
    return out


def build_config(values: Mapping[str, Any], overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    merged = dict(values)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def load_config(path: Path, overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    return build_config(parse_config_text(Path(path).read_text(encoding="utf-8")), overrides)


def _flatten(prefix: str, data: Mapping[str, Any], out: Dict[str, Any]) -> None:
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            _flatten(f"{name}.", value, out)
        else:
            out[name] = value


def dump_config_text(config: ExperimentConfig) -> str:
    flat: Dict[str, Any] = {}
    _flatten("", config.model_dump(mode="json"), flat)
    lines = []
    for key, value in flat.items():
        if value is None:
            text = "none"
        elif isinstance(value, (list, tuple)):
            text = ", ".join(str(v) for v in value)
        elif isinstance(value, bool):
            text = str(value).lower()
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
