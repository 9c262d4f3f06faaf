"""Flat ``key=value`` configuration files.

Every tunable is one line, named after its dataclass field. Unknown keys are
rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
from typing import Any

from .synth import SynthConfig
from .tracker import TrackerConfig


class ConfigError(ValueError):
    pass


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_kv(text: str) -> list[tuple[int, str, str]]:
    items = []
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        items.append((no, key, value))
    return items


def _convert(kind: Any, value: str, key: str) -> Any:
    kind = kind if isinstance(kind, str) else getattr(kind, "__name__", str(kind))
    if kind == "bool":
        low = value.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {value!r}") from None
    return value


def _tracker_fields(cfg: TrackerConfig) -> dict[str, tuple[object, dataclasses.Field]]:
    """Flat field name -> (owning dataclass instance, field)."""
    owners: dict[str, tuple[object, dataclasses.Field]] = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            for sub in dataclasses.fields(value):
                owners[sub.name] = (value, sub)
        else:
            owners[f.name] = (cfg, f)
    return owners


def apply_tracker_overrides(cfg: TrackerConfig, items: list[tuple[int, str, str]]) -> TrackerConfig:
    owners = _tracker_fields(cfg)
    for no, key, value in items:
        if key not in owners:
            raise ConfigError(f"line {no}: unknown config key {key!r}")
        owner, f = owners[key]
        setattr(owner, f.name, _convert(f.type, value, key))
    return cfg


def load_tracker_config(text: str) -> TrackerConfig:
    cfg = apply_tracker_overrides(TrackerConfig(), parse_kv(text))
    problems = cfg.validate()
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


def tracker_config_items(cfg: TrackerConfig) -> dict[str, Any]:
    """Flat snapshot of every tracker tunable."""
    return {key: getattr(owner, f.name) for key, (owner, f) in _tracker_fields(cfg).items()}


def dump_tracker_config(cfg: TrackerConfig) -> str:
    return "".join(f"{k}={render_value(v)}\n" for k, v in tracker_config_items(cfg).items())


def render_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _parse_occlusions(value: str) -> list[tuple[int, int, int]]:
    """``ped:start:duration`` entries separated by commas."""
    out = []
    for chunk in filter(None, (c.strip() for c in value.split(","))):
        parts = chunk.split(":")
        if len(parts) != 3:
            raise ConfigError(f"occlusions: expected ped:start:duration, got {chunk!r}")
        try:
            out.append(tuple(int(p) for p in parts))
        except ValueError:
            raise ConfigError(f"occlusions: non-integer entry {chunk!r}") from None
    return out


def load_synth_config(text: str) -> SynthConfig:
    cfg = SynthConfig()
    fields = {f.name: f for f in dataclasses.fields(cfg)}
    for no, key, value in parse_kv(text):
        if key not in fields:
            raise ConfigError(f"line {no}: unknown config key {key!r}")
        if key == "occlusions":
            cfg.occlusions = _parse_occlusions(value)
        else:
            setattr(cfg, key, _convert(fields[key].type, value, key))
    return cfg
