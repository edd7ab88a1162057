"""Flat ``key = value`` config files mapped onto frozen dataclasses."""

from __future__ import annotations

import dataclasses
import hashlib
from typing import Any, Mapping

from .errors import ConfigError


def parse_config(text: str, source: str = "<config>") -> dict[str, tuple[str, int]]:
    """Return ``{key: (raw value, line number)}``; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(lineno, f"{source}: expected key=value")
        if key in out:
            raise ConfigError(lineno, f"{source}: duplicate key {key!r}")
        out[key] = (value.strip(), lineno)
    return out


def _coerce(raw: str, default: Any, key: str, lineno: int):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if default and isinstance(default[0], (int, float)) and not isinstance(default[0], bool):
                kind = type(default[0])
                return tuple(kind(x) for x in items)
            return tuple(items)
        return raw
    except ValueError:
        raise ConfigError(lineno, f"bad value for {key}: {raw!r}") from None


def build(cls, values: Mapping[str, tuple[str, int]], overrides: Mapping[str, Any] | None = None,
          source: str = "<config>"):
    """Instantiate ``cls`` from parsed config values; ``overrides`` (flags) win."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    defaults = cls()
    kwargs = {}
    for key, (raw, lineno) in values.items():
        if key not in fields:
            raise ConfigError(lineno, f"{source}: unknown key {key!r}")
        kwargs[key] = _coerce(raw, getattr(defaults, key), f"{source}: {key}", lineno)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in fields:
            raise ConfigError(0, f"unknown option {key!r}")
        if isinstance(value, str):
            value = _coerce(value, getattr(defaults, key), key, 0)
        kwargs[key] = value
    return cls(**kwargs)


def format_config(obj) -> str:
    lines = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"


def digest(text: str) -> str:
    return "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest()
