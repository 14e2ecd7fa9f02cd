"""Small helpers for strict parsing of JSON-compatible config dictionaries."""

from __future__ import annotations


class ConfigError(ValueError):
    pass


def strict_fields(data, required=(), optional=(), where="config"):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    required = set(required)
    allowed = required | set(optional)
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    missing = sorted(required - set(data))
    if missing:
        raise ConfigError(f"{where}: missing field(s) {', '.join(missing)}")
    return data
