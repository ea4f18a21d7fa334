"""End-to-end streaming simulation: source -> splitter -> detectors -> pipeline.

The time axis is cut into blocks of roughly ``block_events`` expected
arrivals; every stage carries its state across blocks, so memory stays flat
and the result does not depend on the block size.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .arrivals import InjectionSource, PoissonSource, Splitter, _with_injections
from .detector import (
    Channel,
    DetectionStream,
    Detector,
    DetectorParams,
    incident_rate_for,
)
from .extract import BlankParams, ClockParams, ComboPipeline, PipelineResult
from .units import PS_PER_S

log = logging.getLogger(__name__)

STREAMS = ("S", "Y", "T", "C")


@dataclass(frozen=True)
class SimConfig:
    """Physical configuration of one simulation point.

    ``f_d0`` and ``f_d1`` are *detected* rates per detector (counts/s); the
    incident photon rate for each channel is found by inverting the detector
    response, see :func:`combo_rng.detector.incident_rate_for`.
    """

    f_d0: float = 10e6
    f_d1: float = 10e6
    detector: DetectorParams = field(default_factory=DetectorParams)
    blank: BlankParams = field(default_factory=BlankParams)
    clock: ClockParams = field(default_factory=ClockParams)
    injection_rate: float = 0.0
    injection_phase: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.f_d0 < 0 or self.f_d1 < 0:
            raise ValueError("detector rates must be non-negative")
        if self.injection_rate < 0:
            raise ValueError("injection_rate must be non-negative")

    def incident_rates(self) -> tuple[float, float]:
        return incident_rate_for(self.f_d0, self.detector), incident_rate_for(self.f_d1, self.detector)


def simulate(
    config: SimConfig,
    n_bits: int | None = None,
    stream: str = "C",
    duration: float | None = None,
    block_events: int = 1 << 20,
    on_block: Callable[[DetectionStream, DetectionStream], None] | None = None,
) -> PipelineResult:
    """Simulate until ``stream`` holds ``n_bits`` bits or ``duration`` seconds pass.

    At least one stopping rule is required. When the configuration produces no
    events at all and only ``n_bits`` is given, the run stops after 1 ms.
    """
    if n_bits is None and duration is None:
        raise ValueError("give n_bits, duration or both")
    if n_bits is not None and n_bits < 1:
        raise ValueError("n_bits must be at least 1")
    if stream not in STREAMS:
        raise ValueError(f"stream must be one of {STREAMS}")

    r0, r1 = config.incident_rates()
    total = r0 + r1
    ss = np.random.SeedSequence(config.seed)
    s_src, s_split, s_d0, s_d1 = ss.spawn(4)
    source = PoissonSource(total, s_src) if total > 0 else None
    splitter = Splitter(r1 / total if total > 0 else 0.5, s_split)
    injector = InjectionSource(config.injection_rate, config.injection_phase)
    det0 = Detector(config.detector, s_d0, Channel.D0)
    det1 = Detector(config.detector, s_d1, Channel.D1)
    pipe = ComboPipeline(config.blank, config.clock)
    acc = {"S": pipe.extractor.s, "Y": pipe.extractor.y, "T": pipe.extractor.t, "C": pipe.extractor.c}[stream]

    event_rate = total + 2 * config.injection_rate
    if duration is None and event_rate == 0:
        duration = 1e-3
    end_ps = round(duration * PS_PER_S) if duration is not None else None
    block_ps = max(1, round(block_events / max(event_rate, 1.0) * PS_PER_S))
    if end_ps is not None:
        block_ps = min(block_ps, max(end_ps, 1))

    t0 = 0
    while True:
        t1 = t0 + block_ps if end_ps is None else min(t0 + block_ps, end_ps)
        photons = source.take_until(t1) if source is not None else np.zeros(0, dtype=np.int64)
        ph0, ph1 = splitter.route(photons)
        inj = injector.take_until(t1)
        block_s = (t1 - t0) / PS_PER_S
        dets = []
        for det, ph, ch in ((det0, ph0, Channel.D0), (det1, ph1, Channel.D1)):
            times, kinds = _with_injections(ph, inj)
            dt, do = det.process(times, kinds, t1)
            dets.append(DetectionStream(dt, np.full(dt.size, ch, dtype=np.int8), do, block_s))
        if on_block is not None:
            on_block(dets[0], dets[1])
        pipe.feed(dets[0], dets[1])
        t0 = t1
        if end_ps is not None and t0 >= end_ps:
            break
        if n_bits is not None and len(acc) >= n_bits:
            break
    result = pipe.finish(t0 / PS_PER_S)
    log.debug("simulated %.4g s: %d detections, %d C bits", result.duration, result.n_detected, len(result.C))
    return result
