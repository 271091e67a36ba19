"""Flat `key = value` configuration files.

One assignment per line; `#` starts a comment; blank lines are
ignored.  Keys are dotted lowercase words (fsr.rho, eval.border-crop).
Values stay strings until a typed getter converts them, so command-line
overrides can be merged in as plain strings first.
"""

from __future__ import annotations

from .errors import ConfigError


def parse_config(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or " " in key:
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        values[key] = value
    return values


def load_config(path) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text)


def merge(base: dict[str, str], overrides: dict[str, str]) -> dict[str, str]:
    """Overrides win; None-valued overrides are dropped."""
    merged = dict(base)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = str(value)
    return merged


def get_int(cfg: dict[str, str], key: str, default: int) -> int:
    if key not in cfg:
        return default
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {cfg[key]!r}") from exc


def get_float(cfg: dict[str, str], key: str, default: float) -> float:
    if key not in cfg:
        return default
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {cfg[key]!r}") from exc


def get_str(cfg: dict[str, str], key: str, default: str, choices=None) -> str:
    value = cfg.get(key, default)
    if choices is not None and value not in choices:
        raise ConfigError(f"{key}: expected one of {sorted(choices)}, got {value!r}")
    return value
