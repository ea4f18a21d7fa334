"""Arrival streams: Poisson photons, periodic injection pulses, beam-splitter routing.

All generators exist in two forms. The stateful classes (:class:`PoissonSource`,
:class:`InjectionSource`, :class:`Splitter`) hand out consecutive time blocks
and are used by the streaming simulator; the functions are one-shot wrappers
over them. Because the classes draw random numbers in fixed-size chunks
independent of how the time axis is cut into blocks, a blockwise run and a
one-shot run with the same seed produce identical events.
"""

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .units import PS_PER_S

#: Largest number of events a one-shot generator will materialize.
EVENT_CAPACITY = 2**31 - 1
#: Latest representable time stamp (int64 picoseconds, about 106 days).
MAX_TIME_PS = np.iinfo(np.int64).max // 2

_DRAW_CHUNK = 1 << 16


class Kind(IntEnum):
    PHOTON = 0
    INJECTION = 1


class ArrivalEvent(NamedTuple):
    time: int
    kind: Kind


@dataclass(frozen=True)
class ArrivalStream:
    """Time-ordered arrivals on one channel (or before routing).

    ``times`` is int64 picoseconds, ``kind`` holds :class:`Kind` codes as int8.
    """

    times: np.ndarray
    kind: np.ndarray
    duration: float

    def __len__(self) -> int:
        return self.times.size

    def __iter__(self) -> Iterator[ArrivalEvent]:
        for t, k in zip(self.times.tolist(), self.kind.tolist()):
            yield ArrivalEvent(t, Kind(k))

    @classmethod
    def photons(cls, times, duration: float) -> ArrivalStream:
        times = np.asarray(times, dtype=np.int64)
        return cls(times, np.zeros(times.size, dtype=np.int8), duration)


@dataclass(frozen=True)
class SourceParams:
    """Light-source and attack configuration.

    ``split_prob_d1`` is the probability that a photon is routed onto D1; a
    value of ``0.5 + b`` gives a beam-splitter bias of ``b``.
    ``injection_phase`` defaults to half the injection period.
    """

    mean_rate: float
    duration: float
    split_prob_d1: float = 0.5
    injection_rate: float = 0.0
    injection_phase: int | None = None

    def __post_init__(self):
        if not self.mean_rate > 0:
            raise ValueError("mean_rate must be positive")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not 0.0 <= self.split_prob_d1 <= 1.0:
            raise ValueError("split_prob_d1 must lie in [0, 1]")
        if self.injection_rate < 0:
            raise ValueError("injection_rate must be non-negative")

    @property
    def phase_ps(self) -> int:
        return resolve_phase(self.injection_rate, self.injection_phase)


def resolve_phase(rate: float, phase: int | None) -> int:
    if phase is not None:
        return int(phase)
    if rate <= 0:
        return 0
    return round(PS_PER_S / rate / 2)


def _check_capacity(rate: float, duration: float) -> None:
    if duration * PS_PER_S > MAX_TIME_PS:
        raise ValueError(f"duration {duration} s exceeds the int64 picosecond time axis")
    expected = rate * duration
    if expected + 10 * math.sqrt(expected) > EVENT_CAPACITY:
        raise ValueError(
            f"expected event count {expected:.3g} exceeds capacity {EVENT_CAPACITY}; "
            "use the streaming simulator for runs this long"
        )


class PoissonSource:
    """Poisson photon stream with exponential gaps floored to whole picoseconds.

    A gap that floors to zero would put two photons on the same picosecond;
    the later photon is then moved one picosecond later (without shifting the
    rest of the stream).
    """

    def __init__(self, rate: float, seed):
        if not rate > 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)
        self._mean_ps = PS_PER_S / self.rate
        self._rng = np.random.default_rng(seed)
        self._raw = np.int64(0)  # running sum of floored gaps
        self._last = np.int64(-1)  # last emitted (collision-shifted) time
        self._buf = np.zeros(0, dtype=np.int64)

    def _refill(self) -> None:
        gaps = np.floor(self._rng.exponential(self._mean_ps, _DRAW_CHUNK)).astype(np.int64)
        raw = self._raw + np.cumsum(gaps)
        self._raw = raw[-1]
        # t_i = max(raw_i, t_{i-1} + 1), seeded with the previous chunk's last time
        idx = np.arange(1, raw.size + 1, dtype=np.int64)
        shifted = np.maximum.accumulate(np.maximum(raw - idx, self._last))
        times = shifted + idx
        self._last = times[-1]
        self._buf = np.concatenate([self._buf, times]) if self._buf.size else times

    def take_until(self, horizon_ps: int) -> np.ndarray:
        """All not-yet-emitted arrivals with ``t < horizon_ps``."""
        parts = []
        while True:
            if self._buf.size == 0:
                self._refill()
            n = int(np.searchsorted(self._buf, horizon_ps, side="left"))
            if n < self._buf.size:
                parts.append(self._buf[:n])
                self._buf = self._buf[n:]
                break
            parts.append(self._buf)
            self._buf = np.zeros(0, dtype=np.int64)
        return np.concatenate(parts) if len(parts) > 1 else parts[0].copy()


class InjectionSource:
    """Periodic injection pulses at ``phase + k / rate``."""

    def __init__(self, rate: float, phase: int | None = None):
        if rate < 0:
            raise ValueError("injection rate must be non-negative")
        self.rate = float(rate)
        self.phase = resolve_phase(rate, phase)
        self._k = 0

    def take_until(self, horizon_ps: int) -> np.ndarray:
        if self.rate == 0 or horizon_ps <= self.phase:
            return np.zeros(0, dtype=np.int64)
        period = PS_PER_S / self.rate
        k_end = math.ceil((horizon_ps - self.phase) / period) + 1
        k = np.arange(self._k, max(k_end, self._k), dtype=np.int64)
        times = self.phase + np.rint(k * period).astype(np.int64)
        times = times[times < horizon_ps]
        self._k += times.size
        return times


class Splitter:
    """Routes each photon to D1 with probability ``split_prob_d1``, else to D0."""

    def __init__(self, split_prob_d1: float, seed):
        if not 0.0 <= split_prob_d1 <= 1.0:
            raise ValueError("split_prob_d1 must lie in [0, 1]")
        self.p = float(split_prob_d1)
        self._rng = np.random.default_rng(seed)

    def route(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        to_d1 = self._rng.random(times.size) < self.p
        return times[~to_d1], times[to_d1]


def gen_poisson_arrivals(rate: float, duration: float, seed) -> ArrivalStream:
    """Poisson photon arrivals on ``[0, duration)``; deterministic for a fixed seed."""
    if not rate > 0 or not duration > 0:
        raise ValueError("rate and duration must be positive")
    _check_capacity(rate, duration)
    times = PoissonSource(rate, seed).take_until(round(duration * PS_PER_S))
    return ArrivalStream.photons(times, duration)


def gen_injection_pulses(rate: float, phase: int | None, duration: float) -> ArrivalStream:
    """Injection pulses at ``phase + k/rate`` (ps) for every ``k >= 0`` before ``duration``."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    _check_capacity(rate, duration)
    times = InjectionSource(rate, phase).take_until(round(duration * PS_PER_S))
    return ArrivalStream(times, np.full(times.size, Kind.INJECTION, dtype=np.int8), duration)


def route_splitter(photons: ArrivalStream, split_prob_d1: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Split photon times onto (D0, D1). Both outputs stay sorted."""
    return Splitter(split_prob_d1, seed).route(np.asarray(photons.times, dtype=np.int64))


def merge_sorted(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stable merge of two sorted time arrays.

    Returns the merged times and a boolean mask that is True where the event
    came from ``b``. On equal times, events from ``a`` come first.
    """
    pos = np.searchsorted(a, b, side="right") + np.arange(b.size)
    from_b = np.zeros(a.size + b.size, dtype=bool)
    from_b[pos] = True
    out = np.empty(a.size + b.size, dtype=np.int64)
    out[from_b] = b
    out[~from_b] = a
    return out, from_b


def _with_injections(photons: np.ndarray, injections: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    times, is_inj = merge_sorted(photons, injections)
    return times, is_inj.astype(np.int8)


def merge_with_injection(
    photons_d0, photons_d1, injections, duration: float | None = None
) -> tuple[ArrivalStream, ArrivalStream]:
    """Copy every injection pulse onto both channels at the identical time stamp.

    Inputs may be ``ArrivalStream`` objects or sorted int64 time arrays. A photon
    and a pulse on the same picosecond are ordered photon first.
    """

    def _times(x):
        return np.asarray(x.times if isinstance(x, ArrivalStream) else x, dtype=np.int64)

    if duration is None:
        duration = max(
            (x.duration for x in (photons_d0, photons_d1, injections) if isinstance(x, ArrivalStream)),
            default=0.0,
        )
    inj = _times(injections)
    out = []
    for ph in (photons_d0, photons_d1):
        times, kind = _with_injections(_times(ph), inj)
        out.append(ArrivalStream(times, kind, duration))
    return out[0], out[1]
