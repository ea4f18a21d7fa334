import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from combo_rng.arrivals import ArrivalStream, Kind, gen_poisson_arrivals
from combo_rng.detector import (
    Channel,
    DetectionStream,
    Detector,
    DetectorParams,
    Origin,
    detect,
    incident_rate_for,
    merge_channels,
    nonparalyzable_rate,
)
from combo_rng.units import PS_PER_NS, PS_PER_S

NS = PS_PER_NS


def test_dead_time_hand_trace():
    arr = ArrivalStream.photons([0, 10 * NS, 30 * NS], 1e-6)
    d = detect(arr, DetectorParams(dead_time=24 * NS, afterpulse_prob=0.0), seed=0)
    assert d.times.tolist() == [0, 30 * NS]
    assert d.origin.tolist() == [Origin.PHOTON, Origin.PHOTON]


def test_dead_window_not_extended():
    # 20 ns falls inside the window of 0 but must not push it out to 44 ns
    arr = ArrivalStream.photons([0, 20 * NS, 25 * NS], 1e-6)
    d = detect(arr, DetectorParams(dead_time=24 * NS, afterpulse_prob=0.0), seed=0)
    assert d.times.tolist() == [0, 25 * NS]


def test_params_validation():
    for bad in (dict(dead_time=0), dict(afterpulse_prob=1.0), dict(afterpulse_prob=-0.1),
                dict(efficiency=0.0), dict(efficiency=1.1), dict(injection_detect_prob=2.0)):
        with pytest.raises(ValueError):
            DetectorParams(**bad)


@pytest.mark.parametrize("rate", [1e6, 1e7, 4.1e7])
def test_nonparalyzable_rate(rate):
    p = DetectorParams(afterpulse_prob=0.0)
    dur = 2e5 / rate
    d = detect(gen_poisson_arrivals(rate, dur, 3), p, seed=4)
    expect = nonparalyzable_rate(rate, p.dead_time / PS_PER_S)
    assert abs(len(d) / dur / expect - 1) < 0.01
    assert len(d) / dur <= PS_PER_S / p.dead_time


def test_afterpulse_fraction():
    p = DetectorParams()
    d = detect(gen_poisson_arrivals(3e6, 1.0, 5), p, seed=6)
    n = len(d)
    frac = np.count_nonzero(d.origin == Origin.AFTERPULSE) / n
    # an afterpulse is emitted only if no photon is detected first; at 3 Mcps
    # photon arrivals beat a fraction r*mean/(1 + r*mean) of them
    r = 3e6 / (1 + 3e6 * 24e-9)
    survive = 1 / (1 + r * 30e-9)
    expect = p.afterpulse_prob * survive
    assert abs(frac - expect) < 4 * np.sqrt(expect * (1 - expect) / n) + 0.002


def test_afterpulse_fraction_isolated_pulses():
    # widely spaced photons: every afterpulse survives, so the fraction of
    # afterpulse-tagged detections is p_a (with cascades, p_a of all detections)
    times = np.arange(10**6, dtype=np.int64) * 10**6  # 1 us apart, far beyond delays
    arr = ArrivalStream.photons(times, 1.0)
    p = DetectorParams(afterpulse_mean_delay=30 * NS)
    d = detect(arr, p, seed=1)
    n = len(d)
    frac = np.count_nonzero(d.origin == Origin.AFTERPULSE) / n
    assert abs(frac - p.afterpulse_prob) < 4 * np.sqrt(p.afterpulse_prob * (1 - p.afterpulse_prob) / n)
    ap = d.times[d.origin == Origin.AFTERPULSE]
    parent = d.times[np.searchsorted(d.times, ap) - 1]
    delay = ap - parent - p.dead_time
    assert np.all(delay >= 0)
    assert abs(delay.mean() / p.afterpulse_mean_delay - 1) < 0.05


def test_dead_time_invariant_and_sorted():
    p = DetectorParams()
    arr = gen_poisson_arrivals(5e7, 2e-3, 7)
    d = detect(arr, p, seed=8)
    gaps = np.diff(d.times)
    assert gaps.min() >= p.dead_time


def test_efficiency_thinning():
    p = DetectorParams(afterpulse_prob=0.0, efficiency=0.25, dead_time=1)
    arr = gen_poisson_arrivals(1e6, 0.5, 2)
    d = detect(arr, p, seed=3)
    n = len(arr)
    assert abs(len(d) / n - 0.25) < 4 * np.sqrt(0.25 * 0.75 / n)


def test_injection_detect_probability():
    times = np.arange(200_000, dtype=np.int64) * 10**6
    arr = ArrivalStream(times, np.full(times.size, Kind.INJECTION, dtype=np.int8), 1.0)
    d = detect(arr, DetectorParams(afterpulse_prob=0.0), seed=5)
    n = times.size
    assert abs(len(d) / n - 0.997) < 4 * np.sqrt(0.997 * 0.003 / n)
    assert np.all(d.origin == Origin.INJECTION)


def test_blockwise_equals_one_shot():
    p = DetectorParams()
    arr = gen_poisson_arrivals(2e7, 1e-3, 9)
    one = detect(arr, p, seed=10)
    det = Detector(p, 10)
    end = round(1e-3 * PS_PER_S)
    cuts = [0, 123_456_789, 400_000_000, 400_000_001, 777_000_000, end]
    ts, os = [], []
    for lo, hi in zip(cuts, cuts[1:]):
        sel = (arr.times >= lo) & (arr.times < hi)
        t, o = det.process(arr.times[sel], arr.kind[sel], hi)
        ts.append(t)
        os.append(o)
    assert np.array_equal(np.concatenate(ts), one.times)
    assert np.array_equal(np.concatenate(os), one.origin)


def test_detect_deterministic():
    arr = gen_poisson_arrivals(1e7, 1e-3, 1)
    a = detect(arr, DetectorParams(), 3)
    b = detect(arr, DetectorParams(), 3)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.origin, b.origin)


def test_origin_conservation():
    arr = gen_poisson_arrivals(2e7, 1e-3, 4)
    d = detect(arr, DetectorParams(), 5)
    photons = d.times[d.origin == Origin.PHOTON]
    # every photon-tagged detection is an input arrival, each used once
    assert np.all(np.isin(photons, arr.times))
    assert np.unique(photons).size == photons.size


def test_merge_channels_examples():
    d0 = DetectionStream.from_events([1, 3], Channel.D0)
    d1 = DetectionStream.from_events([2], Channel.D1)
    m = merge_channels(d0, d1)
    assert [(e.time, e.channel) for e in m] == [(1, Channel.D0), (2, Channel.D1), (3, Channel.D0)]
    m = merge_channels(DetectionStream.from_events([5], Channel.D0), DetectionStream.from_events([5], Channel.D1))
    assert [(e.time, e.channel) for e in m] == [(5, Channel.D0), (5, Channel.D1)]


@settings(max_examples=40, deadline=None)
@given(a=st.lists(st.integers(0, 1000), max_size=50), b=st.lists(st.integers(0, 1000), max_size=50))
def test_merge_channels_conservation(a, b):
    d0 = DetectionStream.from_events(sorted(a), Channel.D0)
    d1 = DetectionStream.from_events(sorted(b), Channel.D1)
    m = merge_channels(d0, d1)
    assert len(m) == len(a) + len(b)
    assert np.all(np.diff(m.times) >= 0)
    assert np.count_nonzero(m.channel == Channel.D1) == len(b)
    ties = np.flatnonzero(np.diff(m.times) == 0)
    assert np.all(m.channel[ties] <= m.channel[ties + 1])


def test_incident_rate_inversion():
    p = DetectorParams()
    target = 10e6
    r = incident_rate_for(target, p)
    dur = 0.05
    d = detect(gen_poisson_arrivals(r, dur, 1), p, seed=2)
    assert abs(len(d) / dur / target - 1) < 0.005
    with pytest.raises(ValueError):
        incident_rate_for(5e7, p)
    assert incident_rate_for(0, p) == 0.0
