"""Blanking filter and the three bit-extraction pipelines.

* spatial (S): which detector fired, D0 -> 0, D1 -> 1
* pair-XOR (Y): XOR of non-overlapping consecutive S pairs
* temporal (T): compare two consecutive inter-event intervals measured in
  clock ticks; longer first -> 0, longer second -> 1, equal -> no bit
* combined (C): T XOR Y, pairing each T bit with the Y bit of the same
  event pair

Triplet ``k`` uses accepted events ``2k, 2k+1, 2k+2``; the Y bit built from
events ``2k, 2k+1`` belongs to the same slot. When a slot is a tie the T bit
and its Y partner are both dropped from C, as the hardware latches Y on the
T strobe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numba
import numpy as np

from .bitstream import BitAccumulator, BitStream, as_bits
from .detector import Channel, DetectionStream, merge_channels
from .units import PS_PER_NS

_NEVER = -(1 << 62)


class Retrigger(Enum):
    """What restarts the blanking window.

    ``ACCEPTED_ONLY``: only accepted events open a new window; a suppressed
    event is invisible. ``ANY_EVENT``: every detection, suppressed or not,
    restarts the window, so an event is accepted only if *no* detection
    precedes it by less than the window.
    """

    ACCEPTED_ONLY = "accepted-only"
    ANY_EVENT = "any-event"


class ClockMode(Enum):
    RESTARTABLE = "restartable"
    FREE_RUNNING = "free-running"


#: Hardware blanking grid: 5.6 ns plus whole 4.0 ns steps.
BLANK_GRID_START = 5_600
BLANK_GRID_STEP = 4_000


def blank_grid(k: int) -> int:
    """Blanking window of the k-th hardware setting, in ps (k=3 gives 17.6 ns)."""
    if k < 0:
        raise ValueError("grid index must be non-negative")
    return BLANK_GRID_START + k * BLANK_GRID_STEP


@dataclass(frozen=True)
class BlankParams:
    blank_window: int = blank_grid(3)
    retrigger: Retrigger = Retrigger.ANY_EVENT

    def __post_init__(self):
        if self.blank_window < 0:
            raise ValueError("blank_window must be non-negative")


@dataclass(frozen=True)
class ClockParams:
    clock_period: int = 1 * PS_PER_NS
    mode: ClockMode = ClockMode.RESTARTABLE

    def __post_init__(self):
        if not self.clock_period > 0:
            raise ValueError("clock_period must be positive")


@dataclass(frozen=True)
class BlankedStream:
    """Output of the blanking filter.

    ``coincident`` marks accepted events whose exact-time partner on the other
    channel was suppressed (a simultaneous injection pair).
    """

    accepted: DetectionStream
    coincident: np.ndarray
    blanked_count: int
    duration: float

    def __len__(self) -> int:
        return len(self.accepted)


@numba.njit(cache=True)
def _blank_scan(times, channels, window, any_event, state, accept, coinc):
    # state: [t_accepted, t_previous, channel_accepted]
    t_acc = state[0]
    t_prev = state[1]
    ch_acc = state[2]
    j_acc = -1
    n_blanked = 0
    for i in range(times.size):
        t = times[i]
        ref = t_prev if any_event else t_acc
        if t == t_acc:
            ok = False
            if j_acc >= 0 and channels[i] != ch_acc:
                coinc[j_acc] = True
        elif t == t_prev:
            ok = False
        else:
            ok = t - ref >= window
        if ok:
            accept[i] = True
            t_acc = t
            ch_acc = channels[i]
            j_acc = i
        else:
            n_blanked += 1
        t_prev = t
    state[0] = t_acc
    state[1] = t_prev
    state[2] = ch_acc
    return n_blanked


class Blanker:
    """Stateful blanking filter over consecutive blocks of a merged stream."""

    def __init__(self, params: BlankParams):
        self.params = params
        self._state = np.array([_NEVER, _NEVER, -1], dtype=np.int64)

    def process(self, merged: DetectionStream) -> tuple[np.ndarray, np.ndarray, int]:
        """Return (accept mask, coincidence mask over the input, blanked count)."""
        n = len(merged)
        accept = np.zeros(n, dtype=np.bool_)
        coinc = np.zeros(n, dtype=np.bool_)
        blanked = _blank_scan(
            np.ascontiguousarray(merged.times), np.ascontiguousarray(merged.channel),
            np.int64(self.params.blank_window), self.params.retrigger is Retrigger.ANY_EVENT,
            self._state, accept, coinc,
        )
        return accept, coinc, int(blanked)


def blank(merged: DetectionStream, params: BlankParams = BlankParams()) -> BlankedStream:
    """Suppress every event closer than the blanking window to its reference event.

    An exact-time pair on both channels always collapses to its first member
    (D0 by the merge convention), whatever the window.
    """
    if len(merged) > 1 and np.any(np.diff(merged.times) < 0):
        raise ValueError("merged stream must be sorted")
    accept, coinc, blanked = Blanker(params).process(merged)
    return BlankedStream(merged.where(accept), coinc[accept], blanked, merged.duration)


def bsr_bits(channel: np.ndarray, coincident: np.ndarray | None = None) -> np.ndarray:
    bits = (np.asarray(channel) == Channel.D1).astype(np.uint8)
    if coincident is not None:
        bits[np.asarray(coincident, dtype=bool)] = 1
    return bits


def extract_bsr(accepted: BlankedStream | DetectionStream) -> BitStream:
    """Spatial bits: one per accepted event, D0 -> 0, D1 -> 1.

    A simultaneous pair (only possible from injection) yields a single 1.
    """
    if isinstance(accepted, BlankedStream):
        bits = bsr_bits(accepted.accepted.channel, accepted.coincident)
        duration = accepted.duration
    else:
        bits = bsr_bits(accepted.channel)
        duration = accepted.duration
    return BitStream.from_bits(bits, "S", duration)


def pair_xor(bits: np.ndarray) -> np.ndarray:
    m = bits.size // 2
    return bits[0 : 2 * m : 2] ^ bits[1 : 2 * m : 2]


def derive_y(s) -> BitStream:
    """``y_i = s_2i XOR s_2i+1``; a trailing odd bit is dropped."""
    prod = s.production_time if isinstance(s, BitStream) else 0.0
    return BitStream.from_bits(pair_xor(as_bits(s)), "Y", prod)


def tick_counts(times: np.ndarray, clock: ClockParams) -> np.ndarray:
    """Clock ticks counted in each interval ``[times[i], times[i+1])``.

    Restartable: the clock phase is zeroed at the interval's opening event, so
    the count is ``floor(interval / period)``. Free-running: ticks sit at
    ``k * period`` on a global grid and are counted when they fall inside
    the interval.
    """
    times = np.asarray(times, dtype=np.int64)
    g = clock.clock_period
    if clock.mode is ClockMode.RESTARTABLE:
        return np.diff(times) // g
    first_tick = -(-times // g)  # ceil(t / g): index of first tick at or after t
    return np.diff(first_tick)


def t1t2_slots(times: np.ndarray, clock: ClockParams) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate every complete triplet slot in ``times``.

    Returns (bit per slot, valid mask); a slot is invalid when the two tick
    counts are equal. Slot ``k`` uses ``times[2k:2k+3]``.
    """
    times = np.asarray(times, dtype=np.int64)
    n_slots = (times.size - 1) // 2 if times.size else 0
    if n_slots <= 0:
        return np.zeros(0, dtype=np.uint8), np.zeros(0, dtype=bool)
    counts = tick_counts(times[: 2 * n_slots + 1], clock)
    t1 = counts[0::2]
    t2 = counts[1::2]
    return (t2 > t1).astype(np.uint8), t1 != t2


def _event_times(accepted) -> tuple[np.ndarray, float]:
    if isinstance(accepted, BlankedStream):
        return accepted.accepted.times, accepted.duration
    if isinstance(accepted, DetectionStream):
        return accepted.times, accepted.duration
    return np.asarray(accepted, dtype=np.int64), 0.0


def extract_t1t2(accepted, clock: ClockParams = ClockParams()) -> BitStream:
    """Temporal bits from consecutive, chained triplets of accepted events."""
    times, duration = _event_times(accepted)
    bits, valid = t1t2_slots(times, clock)
    return BitStream.from_bits(bits[valid], "T", duration)


def extract_t1t2_freerunning(accepted, clock: ClockParams = ClockParams()) -> BitStream:
    """T1T2 with a free-running (global-phase) clock, for comparison only."""
    free = ClockParams(clock.clock_period, ClockMode.FREE_RUNNING)
    return extract_t1t2(accepted, free)


def combine(t, y) -> BitStream:
    """``c_i = t_i XOR y_i`` over the common length."""
    tb, yb = as_bits(t), as_bits(y)
    m = min(tb.size, yb.size)
    prod = t.production_time if isinstance(t, BitStream) else 0.0
    return BitStream.from_bits(tb[:m] ^ yb[:m], "C", prod)


class ComboExtractor:
    """Streaming S/Y/T/C extraction from blocks of accepted events.

    Events of an incomplete triplet are carried over to the next block, so
    the result is independent of block boundaries.
    """

    def __init__(self, clock: ClockParams = ClockParams()):
        self.clock = clock
        self.s = BitAccumulator("S")
        self.y = BitAccumulator("Y")
        self.t = BitAccumulator("T")
        self.c = BitAccumulator("C")
        self.y_paired = BitAccumulator("Y")
        self.tie_count = 0
        self._times = np.zeros(0, dtype=np.int64)
        self._bits = np.zeros(0, dtype=np.uint8)
        self._finished = False

    def feed(self, times: np.ndarray, sbits: np.ndarray) -> None:
        if self._finished:
            raise RuntimeError("extractor already finished")
        self.s.extend(sbits)
        times = np.concatenate([self._times, np.asarray(times, dtype=np.int64)])
        bits = np.concatenate([self._bits, np.asarray(sbits, dtype=np.uint8)])
        tbits, valid = t1t2_slots(times, self.clock)
        n_slots = tbits.size
        y = pair_xor(bits[: 2 * n_slots])
        self.y.extend(y)
        tv = tbits[valid]
        yv = y[valid]
        self.t.extend(tv)
        self.y_paired.extend(yv)
        self.c.extend(tv ^ yv)
        self.tie_count += n_slots - int(np.count_nonzero(valid))
        self._times = times[2 * n_slots :]
        self._bits = bits[2 * n_slots :]

    def finish(self) -> None:
        if not self._finished and self._bits.size >= 2:
            self.y.extend(pair_xor(self._bits[:2]))
        self._finished = True


@dataclass
class PipelineResult:
    """Everything one pipeline run produces.

    ``y_paired`` is the Y stream restricted to valid T1T2 slots, i.e. exactly
    the Y bits that enter C, aligned index by index with T.
    """

    S: BitStream
    Y: BitStream
    T: BitStream
    C: BitStream
    y_paired: BitStream
    f_G: float
    f_B: float
    duration: float
    n_detected: int
    n_accepted: int
    n_blanked: int
    tie_count: int
    n_detected_d0: int = 0
    n_detected_d1: int = 0
    origin_counts: dict = field(default_factory=dict)


class ComboPipeline:
    """merge -> blank -> (S -> Y) and (T1T2 -> T) -> C, fed block by block."""

    def __init__(self, blank_params: BlankParams = BlankParams(), clock: ClockParams = ClockParams()):
        self.blanker = Blanker(blank_params)
        self.extractor = ComboExtractor(clock)
        self.n_detected = 0
        self.n_blanked = 0
        self.n_d0 = 0
        self.n_d1 = 0
        self.origin_counts = {0: 0, 1: 0, 2: 0}

    def feed(self, d0: DetectionStream, d1: DetectionStream) -> BlankedStream:
        merged = merge_channels(d0, d1)
        self.n_detected += len(merged)
        self.n_d0 += len(d0)
        self.n_d1 += len(d1)
        for code, count in zip(*np.unique(merged.origin, return_counts=True)):
            self.origin_counts[int(code)] += int(count)
        accept, coinc, blanked = self.blanker.process(merged)
        self.n_blanked += blanked
        acc = merged.where(accept)
        coinc = coinc[accept]
        self.extractor.feed(acc.times, bsr_bits(acc.channel, coinc))
        return BlankedStream(acc, coinc, blanked, merged.duration)

    def finish(self, duration: float) -> PipelineResult:
        ex = self.extractor
        ex.finish()
        streams = {k: acc.to_stream(duration) for k, acc in
                   (("S", ex.s), ("Y", ex.y), ("T", ex.t), ("C", ex.c), ("y_paired", ex.y_paired))}
        rate = (lambda n: n / duration) if duration > 0 else (lambda n: 0.0)
        return PipelineResult(
            S=streams["S"], Y=streams["Y"], T=streams["T"], C=streams["C"], y_paired=streams["y_paired"],
            f_G=rate(len(ex.c)), f_B=rate(self.n_blanked), duration=duration,
            n_detected=self.n_detected, n_accepted=len(ex.s), n_blanked=self.n_blanked,
            tie_count=ex.tie_count, n_detected_d0=self.n_d0, n_detected_d1=self.n_d1,
            origin_counts=dict(self.origin_counts),
        )


def run_pipeline(
    d0: DetectionStream,
    d1: DetectionStream,
    blank_params: BlankParams = BlankParams(),
    clock: ClockParams = ClockParams(),
) -> PipelineResult:
    """Run the full extraction on two detector outputs.

    Both T1T2 and BSR are fed from the same blanked stream. ``f_G`` is C bits
    per simulated second, ``f_B`` blanked events per second.
    """
    pipe = ComboPipeline(blank_params, clock)
    pipe.feed(d0, d1)
    return pipe.finish(max(d0.duration, d1.duration))
