"""Flat ``key = value`` configuration files.

Durations take ps/ns/us/ms/s suffixes and are stored in picoseconds; rates
take optional k/M/G prefixes with Hz or cps. ``#`` starts a comment. A run
manifest is itself a valid configuration file.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Callable
from pathlib import Path
from typing import Any

from .detector import DetectorParams
from .extract import BlankParams, ClockMode, ClockParams, Retrigger
from .units import parse_duration, parse_rate


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    v = float(text)
    if v != int(v):
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


def _opt_duration(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none", "auto") else parse_duration(text)


def _list_of(parse: Callable[[str], Any]) -> Callable[[str], tuple]:
    def inner(text: str) -> tuple:
        items = [s for s in text.replace(";", ",").split(",") if s.strip()]
        return tuple(parse(s.strip()) for s in items)

    return inner


def _grid_value(text: str) -> float:
    # Grid entries are rates for rate sweeps and durations for blank sweeps;
    # keep whatever unit the text carries and let the scenario interpret it.
    try:
        return parse_rate(text)
    except ValueError:
        return float(parse_duration(text))


# key -> (parser, formatter)
KEYS: dict[str, tuple[Callable[[str], Any], Callable[[Any], str]]] = {
    "scenario": (str, str),
    "version": (str, str),
    "seed": (_int, str),
    "bits": (_int, str),
    "stream": (str, str),
    "k_max": (_int, str),
    "f_d0": (parse_rate, repr),
    "f_d1": (parse_rate, repr),
    "injection_rate": (parse_rate, repr),
    "injection_phase": (_opt_duration, lambda v: "auto" if v is None else f"{v}ps"),
    "blank_window": (parse_duration, lambda v: f"{v}ps"),
    "retrigger": (Retrigger, lambda v: v.value),
    "clock_period": (parse_duration, lambda v: f"{v}ps"),
    "clock_mode": (ClockMode, lambda v: v.value),
    "dead_time": (parse_duration, lambda v: f"{v}ps"),
    "afterpulse_prob": (float, repr),
    "afterpulse_mean_delay": (parse_duration, lambda v: f"{v}ps"),
    "efficiency": (float, repr),
    "injection_detect_prob": (float, repr),
    "grid": (_list_of(_grid_value), lambda v: ", ".join(repr(x) for x in v)),
    "full": (_bool, lambda v: "true" if v else "false"),
}


def parse_value(key: str, text: str) -> Any:
    if key not in KEYS:
        raise ConfigError(key, "unknown key")
    try:
        return KEYS[key][0](text)
    except (ValueError, KeyError) as e:
        raise ConfigError(key, f"cannot parse {text!r} ({e})") from None


def format_value(key: str, value: Any) -> str:
    return KEYS[key][1](value)


def parse_text(text: str, source: str = "<config>") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(key or f"line {lineno}", f"{source}:{lineno}: expected 'key = value'")
        out[key] = parse_value(key, value.strip())
    return out


def load_config(path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise OSError(f"cannot read config {path}: {e.strerror or e}") from e
    return parse_text(text, str(path))


def _make(cls, values: dict[str, Any], renames: dict[str, str] | None = None):
    renames = renames or {}
    fields = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in values.items():
        name = renames.get(key, key)
        if name in fields:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except ValueError as e:
        # name the config key whose field the message mentions
        back = {renames.get(k, k): k for k in values}
        key = next((back[f] for f in kwargs if f in str(e)), cls.__name__)
        raise ConfigError(key, str(e)) from None


def build_params(values: dict[str, Any]) -> tuple[DetectorParams, BlankParams, ClockParams]:
    """Construct the parameter dataclasses, naming the key behind any validation error."""
    return (
        _make(DetectorParams, values),
        _make(BlankParams, values),
        _make(ClockParams, values, {"clock_mode": "mode"}),
    )


def dump_config(values: dict[str, Any]) -> str:
    return "".join(f"{k} = {format_value(k, v)}\n" for k, v in values.items())
