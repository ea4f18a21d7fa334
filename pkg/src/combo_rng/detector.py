"""Single-photon detector model: efficiency thinning, non-paralyzable dead time,
afterpulsing with an exponential delay past the end of the dead time.

The per-channel scan is a numba kernel that can be suspended and resumed, so
:class:`Detector` can be fed consecutive time blocks. Random draws come from
three independent numpy generators consumed in fixed-size chunks; the output
therefore does not depend on how the input is blocked.
"""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numba
import numpy as np

from .arrivals import ArrivalStream, merge_sorted
from .units import PS_PER_NS, PS_PER_S

_DRAW_CHUNK = 1 << 16
_NEVER = -(1 << 62)
_INF = np.iinfo(np.int64).max


class Channel(IntEnum):
    D0 = 0
    D1 = 1


class Origin(IntEnum):
    PHOTON = 0
    AFTERPULSE = 1
    INJECTION = 2


@dataclass(frozen=True)
class DetectorParams:
    """Detector configuration. Times are integer picoseconds.

    Defaults are the nominal detectors: 24 ns dead time, 3.1 % afterpulsing,
    30 ns mean afterpulse delay, unit photon efficiency and a 99.7 % chance
    of registering an injected pulse.
    """

    dead_time: int = 24 * PS_PER_NS
    afterpulse_prob: float = 0.031
    afterpulse_mean_delay: int = 30 * PS_PER_NS
    efficiency: float = 1.0
    injection_detect_prob: float = 0.997

    def __post_init__(self):
        if not self.dead_time > 0:
            raise ValueError("dead_time must be positive")
        if not 0.0 <= self.afterpulse_prob < 1.0:
            raise ValueError("afterpulse_prob must lie in [0, 1)")
        if self.afterpulse_mean_delay < 0:
            raise ValueError("afterpulse_mean_delay must be non-negative")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in (0, 1]")
        if not 0.0 <= self.injection_detect_prob <= 1.0:
            raise ValueError("injection_detect_prob must lie in [0, 1]")


class DetectionEvent(NamedTuple):
    time: int
    channel: Channel
    origin: Origin


@dataclass(frozen=True)
class DetectionStream:
    """Struct-of-arrays detector output: int64 times, int8 channel and origin codes."""

    times: np.ndarray
    channel: np.ndarray
    origin: np.ndarray
    duration: float = 0.0

    def __post_init__(self):
        if not (self.times.size == self.channel.size == self.origin.size):
            raise ValueError("times, channel and origin must have equal length")

    def __len__(self) -> int:
        return self.times.size

    def __iter__(self) -> Iterator[DetectionEvent]:
        for t, c, o in zip(self.times.tolist(), self.channel.tolist(), self.origin.tolist()):
            yield DetectionEvent(t, Channel(c), Origin(o))

    @classmethod
    def empty(cls, duration: float = 0.0) -> DetectionStream:
        z = np.zeros(0, dtype=np.int8)
        return cls(np.zeros(0, dtype=np.int64), z, z.copy(), duration)

    @classmethod
    def from_events(cls, times, channel, origin=None, duration: float = 0.0) -> DetectionStream:
        times = np.asarray(times, dtype=np.int64)
        ch = np.broadcast_to(np.asarray(channel, dtype=np.int8), times.shape).copy()
        if origin is None:
            origin = Origin.PHOTON
        org = np.broadcast_to(np.asarray(origin, dtype=np.int8), times.shape).copy()
        return cls(times, ch, org, duration)

    def where(self, mask: np.ndarray) -> DetectionStream:
        return DetectionStream(self.times[mask], self.channel[mask], self.origin[mask], self.duration)


# kernel return codes
_DONE, _NEED_AP, _NEED_DELAY, _PENDING_FULL, _OUT_FULL = 0, 1, 2, 3, 4


@numba.njit(cache=True)
def _detect_scan(
    times, kinds, u_keep, horizon,
    dead, p_a, mean_delay, eff, p_inj,
    u_ap, e_ap, state, pending, out_t, out_o,
):
    # state: [t_last, i_next, cursor_ap, cursor_delay, n_pending, n_out]
    t_last = state[0]
    i = state[1]
    ca = state[2]
    ce = state[3]
    npend = state[4]
    nout = state[5]
    n = times.size
    code = 0
    while True:
        if ca >= u_ap.size:
            code = 1
            break
        if ce >= e_ap.size:
            code = 2
            break
        if npend >= pending.size:
            code = 3
            break
        if nout >= out_t.size:
            code = 4
            break
        jmin = -1
        tp = np.int64(9223372036854775807)
        for j in range(npend):
            if pending[j] < tp:
                tp = pending[j]
                jmin = j
        if i < n:
            ta = times[i]
        else:
            ta = np.int64(9223372036854775807)
            if tp >= horizon:
                break
        if tp < ta:
            pending[jmin] = pending[npend - 1]
            npend -= 1
            if tp < t_last + dead:
                continue
            t = tp
            origin = 1
        else:
            k = kinds[i]
            u = u_keep[i]
            i += 1
            if k == 0:
                if u >= eff:
                    continue
                origin = 0
            else:
                if u >= p_inj:
                    continue
                origin = 2
            if ta < t_last + dead:
                continue
            t = ta
        out_t[nout] = t
        out_o[nout] = origin
        nout += 1
        t_last = t
        u = u_ap[ca]
        ca += 1
        if u < p_a:
            pending[npend] = t + dead + np.int64(mean_delay * e_ap[ce])
            ce += 1
            npend += 1
    state[0] = t_last
    state[1] = i
    state[2] = ca
    state[3] = ce
    state[4] = npend
    state[5] = nout
    return code


class _Draws:
    """Fixed-chunk buffered draws from one generator, consumed through a cursor."""

    def __init__(self, rng: np.random.Generator, kind: str):
        self._rng = rng
        self._kind = kind
        self.buf = self._draw()

    def _draw(self) -> np.ndarray:
        if self._kind == "uniform":
            return self._rng.random(_DRAW_CHUNK)
        return self._rng.standard_exponential(_DRAW_CHUNK)

    def consume(self, n: int) -> None:
        self.buf = self.buf[n:]

    def grow(self) -> None:
        self.buf = np.concatenate([self.buf, self._draw()])


class Detector:
    """Stateful single-channel detector fed with consecutive arrival blocks."""

    def __init__(self, params: DetectorParams, seed, channel: Channel = Channel.D0):
        self.params = params
        self.channel = Channel(channel)
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        s_keep, s_ap, s_delay = ss.spawn(3)
        self._rng_keep = np.random.default_rng(s_keep)
        self._ap = _Draws(np.random.default_rng(s_ap), "uniform")
        self._delay = _Draws(np.random.default_rng(s_delay), "exponential")
        self._t_last = _NEVER
        self._pending = np.zeros(16, dtype=np.int64)
        self._npend = 0

    def process(self, times: np.ndarray, kinds: np.ndarray, horizon: int) -> tuple[np.ndarray, np.ndarray]:
        """Detect arrivals (all ``< horizon``) and any afterpulses due before ``horizon``.

        Returns (times, origin codes). Afterpulses at or after ``horizon`` stay
        pending for the next call.
        """
        p = self.params
        times = np.ascontiguousarray(times, dtype=np.int64)
        kinds = np.ascontiguousarray(kinds, dtype=np.int8)
        u_keep = self._rng_keep.random(times.size)
        cap = times.size + times.size // 8 + 64
        out_t = np.empty(cap, dtype=np.int64)
        out_o = np.empty(cap, dtype=np.int8)
        state = np.array([self._t_last, 0, 0, 0, self._npend, 0], dtype=np.int64)
        while True:
            code = _detect_scan(
                times, kinds, u_keep, np.int64(horizon),
                np.int64(p.dead_time), p.afterpulse_prob, float(p.afterpulse_mean_delay),
                p.efficiency, p.injection_detect_prob,
                self._ap.buf, self._delay.buf, state, self._pending, out_t, out_o,
            )
            self._ap.consume(int(state[2]))
            self._delay.consume(int(state[3]))
            state[2] = state[3] = 0
            if code == _DONE:
                break
            if code == _NEED_AP:
                self._ap.grow()
            elif code == _NEED_DELAY:
                self._delay.grow()
            elif code == _PENDING_FULL:
                self._pending = np.concatenate([self._pending, np.zeros_like(self._pending)])
            elif code == _OUT_FULL:
                out_t = np.concatenate([out_t, np.empty(cap, dtype=np.int64)])
                out_o = np.concatenate([out_o, np.empty(cap, dtype=np.int8)])
        self._t_last = int(state[0])
        self._npend = int(state[4])
        n = int(state[5])
        return out_t[:n].copy(), out_o[:n].copy()


def detect(arrivals: ArrivalStream, params: DetectorParams, seed, channel: Channel = Channel.D0) -> DetectionStream:
    """Turn one channel's arrivals into detection events.

    Afterpulses falling after ``arrivals.duration`` are dropped, matching a
    simulation that stops at that time.
    """
    times = np.asarray(arrivals.times, dtype=np.int64)
    if times.size > 1 and np.any(np.diff(times) < 0):
        raise ValueError("arrivals must be sorted")
    horizon = round(arrivals.duration * PS_PER_S) if arrivals.duration > 0 else _INF
    if times.size and horizon <= times[-1]:
        horizon = int(times[-1]) + 1
    t, o = Detector(params, seed, channel).process(times, arrivals.kind, horizon)
    return DetectionStream(t, np.full(t.size, channel, dtype=np.int8), o, arrivals.duration)


def merge_channels(d0: DetectionStream, d1: DetectionStream) -> DetectionStream:
    """Interleave two sorted detection streams; on exact ties D0 precedes D1."""
    times, from_d1 = merge_sorted(d0.times, d1.times)
    origin = np.empty(times.size, dtype=np.int8)
    origin[from_d1] = d1.origin
    origin[~from_d1] = d0.origin
    channel = np.empty(times.size, dtype=np.int8)
    channel[from_d1] = d1.channel
    channel[~from_d1] = d0.channel
    return DetectionStream(times, channel, origin, max(d0.duration, d1.duration))


def nonparalyzable_rate(rate: float, dead_time_s: float) -> float:
    """Detected rate of a non-paralyzable counter: ``rate / (1 + rate * dead_time)``."""
    return rate / (1.0 + rate * dead_time_s)


def incident_rate_for(detected: float, params: DetectorParams) -> float:
    """Incident photon rate giving ``detected`` counts/s, afterpulses included.

    Inverts the non-paralyzable formula after removing the afterpulse share.
    An afterpulse survives only if no photon is detected before it, which for
    exponential delays happens with probability ``1 / (1 + r * mean_delay)``;
    the resulting fixed point is solved by iteration.
    """
    if detected <= 0:
        return 0.0
    tau_d = params.dead_time / PS_PER_S
    mean_delay = params.afterpulse_mean_delay / PS_PER_S
    if detected * tau_d >= 1.0:
        raise ValueError(f"detected rate {detected:g}/s is at or above the 1/dead_time ceiling")
    r = detected / (1.0 - detected * tau_d)
    for _ in range(100):
        p_eff = params.afterpulse_prob / (1.0 + r * mean_delay)
        photon_detected = detected * (1.0 - p_eff)
        r_new = photon_detected / (1.0 - detected * tau_d)
        if abs(r_new - r) < 1e-12 * r:
            break
        r = r_new
    return r / params.efficiency
