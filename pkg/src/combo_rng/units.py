"""Time units. The simulator's clock is integer picoseconds throughout."""

from __future__ import annotations

import re

PS_PER_S = 10**12
PS_PER_NS = 1_000

_UNIT_PS = {
    "ps": 1,
    "ns": 10**3,
    "us": 10**6,
    "µs": 10**6,
    "ms": 10**9,
    "s": 10**12,
}

_DURATION_RE = re.compile(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([a-zµ]*)\s*$")


def parse_duration(text: str | float, default_unit: str = "ps") -> int:
    """Parse ``"17.6ns"``, ``"24 ns"``, ``"1us"`` or a bare number into picoseconds.

    Bare numbers are interpreted in ``default_unit``. The result is rounded
    to the nearest picosecond.
    """
    if isinstance(text, (int, float)):
        return round(text * _UNIT_PS[default_unit])
    m = _DURATION_RE.match(text)
    if m is None:
        raise ValueError(f"cannot parse duration {text!r}")
    value, unit = m.groups()
    unit = unit or default_unit
    if unit not in _UNIT_PS:
        raise ValueError(f"unknown time unit {unit!r} in {text!r}")
    return round(float(value) * _UNIT_PS[unit])


def parse_rate(text: str | float) -> float:
    """Parse a rate such as ``"10Mcps"``, ``"1.3MHz"``, ``"7e6"`` into events/s."""
    if isinstance(text, (int, float)):
        return float(text)
    m = re.match(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([kMG]?)(?:Hz|cps|/s)?\s*$", text)
    if m is None:
        raise ValueError(f"cannot parse rate {text!r}")
    value, prefix = m.groups()
    return float(value) * {"": 1.0, "k": 1e3, "M": 1e6, "G": 1e9}[prefix]


def ps_to_s(t_ps: float) -> float:
    return t_ps / PS_PER_S


def s_to_ps(t_s: float) -> int:
    return round(t_s * PS_PER_S)
