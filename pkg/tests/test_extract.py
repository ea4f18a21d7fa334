import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import tie_probability

from combo_rng import stats
from combo_rng.arrivals import gen_poisson_arrivals
from combo_rng.bitstream import BitStream
from combo_rng.detector import (
    Channel,
    DetectionStream,
    DetectorParams,
    Origin,
    merge_channels,
)
from combo_rng.extract import (
    BlankParams,
    ClockMode,
    ClockParams,
    ComboPipeline,
    Retrigger,
    blank,
    blank_grid,
    combine,
    derive_y,
    extract_bsr,
    extract_t1t2,
    extract_t1t2_freerunning,
    run_pipeline,
    tick_counts,
)
from combo_rng.simulate import SimConfig, simulate
from combo_rng.units import PS_PER_NS

NS = PS_PER_NS


def _merged(times_ns, channels=None):
    t = np.asarray(times_ns, dtype=np.int64) * NS
    ch = np.zeros(t.size, dtype=np.int8) if channels is None else np.asarray(channels, dtype=np.int8)
    return DetectionStream.from_events(t, ch)


@pytest.mark.parametrize("mode", list(Retrigger))
def test_blank_hand_trace(mode):
    b = blank(_merged([0, 10, 30, 100]), BlankParams(17_600, mode))
    assert (b.accepted.times // NS).tolist() == [0, 30, 100]
    assert b.blanked_count == 1


def test_blank_zero_window_accepts_all():
    m = _merged([0, 1, 2, 50])
    b = blank(m, BlankParams(0))
    assert len(b) == 4 and b.blanked_count == 0


def test_blank_retrigger_modes():
    m = _merged([0, 10, 20])
    fixed = blank(m, BlankParams(17_600, Retrigger.ACCEPTED_ONLY))
    assert (fixed.accepted.times // NS).tolist() == [0, 20]
    retrig = blank(m, BlankParams(17_600, Retrigger.ANY_EVENT))
    assert (retrig.accepted.times // NS).tolist() == [0]
    assert retrig.blanked_count == 2


def test_blank_grid():
    assert blank_grid(0) == 5_600
    assert blank_grid(3) == 17_600
    with pytest.raises(ValueError):
        blank_grid(-1)


def test_coincident_pair_forces_one():
    d0 = DetectionStream.from_events([100 * NS], Channel.D0, Origin.INJECTION)
    d1 = DetectionStream.from_events([100 * NS], Channel.D1, Origin.INJECTION)
    b = blank(merge_channels(d0, d1), BlankParams(0))
    assert len(b) == 1 and b.blanked_count == 1
    assert extract_bsr(b).bits.tolist() == [1]


@settings(max_examples=40, deadline=None)
@given(
    gaps=st.lists(st.integers(0, 40_000), min_size=1, max_size=200),
    window=st.integers(0, 30_000),
    mode=st.sampled_from(list(Retrigger)),
)
def test_blank_floor_and_conservation(gaps, window, mode):
    t = np.cumsum(np.asarray(gaps, dtype=np.int64))
    ch = (np.arange(t.size) % 2).astype(np.int8)
    # equal times only across channels: keep within-channel strictly increasing
    m = DetectionStream.from_events(t, ch)
    b = blank(m, BlankParams(window, mode))
    assert len(b) + b.blanked_count == len(m)
    gaps_acc = np.diff(b.accepted.times)
    assert np.all(gaps_acc >= max(window, 1))


def test_bsr_examples():
    m = DetectionStream.from_events([1, 2, 3, 4], [0, 1, 1, 0])
    assert extract_bsr(m).bits.tolist() == [0, 1, 1, 0]
    assert len(extract_bsr(DetectionStream.empty())) == 0


def test_derive_y_examples():
    assert derive_y(BitStream.from_bits([0, 1, 1, 0])).bits.tolist() == [1, 1]
    assert derive_y(BitStream.from_bits([1, 1])).bits.tolist() == [0]
    assert derive_y(BitStream.from_bits([1, 0, 1])).bits.tolist() == [1]


def test_t1t2_examples():
    clk = ClockParams(1 * NS)
    assert extract_t1t2(np.array([0, 100, 250]) * NS, clk).bits.tolist() == [1]
    assert extract_t1t2(np.array([0, 100, 200]) * NS, clk).bits.tolist() == []
    assert extract_t1t2(np.array([0, 150, 250]) * NS, clk).bits.tolist() == [0]
    # chained triplets share their boundary event
    t = np.array([0, 100, 250, 260, 400]) * NS
    assert extract_t1t2(t, clk).bits.tolist() == [1, 1]


def test_restartable_quantization_is_pure_function_of_interval():
    clk = ClockParams(1000)
    a = tick_counts(np.array([1, 2000]), clk)
    b = tick_counts(np.array([500, 2499]), clk)
    assert a.tolist() == b.tolist() == [1]
    free = ClockParams(1000, ClockMode.FREE_RUNNING)
    assert tick_counts(np.array([1, 2000]), free).tolist() == [1]  # tick at 1000
    assert tick_counts(np.array([500, 2499]), free).tolist() == [2]  # ticks at 1000, 2000


def test_combine_examples():
    assert combine(BitStream.from_bits([0, 1]), BitStream.from_bits([1, 1])).bits.tolist() == [1, 0]
    t = BitStream.from_bits([1, 0, 1, 1])
    assert combine(t, BitStream.from_bits([0, 0, 0])).bits.tolist() == [1, 0, 1]


def test_t1t2_poisson_unbiased():
    ph = gen_poisson_arrivals(1e7, 0.2, 3)
    rep = stats.measure(extract_t1t2(ph.times, ClockParams()), 1)
    assert abs(rep.bias) < 4 * rep.sigma_b
    assert abs(rep.a(1)) < 4 * rep.sigma_a(1)


def test_tie_rate_matches_series_oracle():
    g, tau = 1000, 100_000  # 1 ns clock, 100 ns mean interval
    ph = gen_poisson_arrivals(1e7, 0.1, 5)
    counts = tick_counts(ph.times, ClockParams(g))
    n = (counts.size // 2) * 2
    ties = np.mean(counts[0:n:2] == counts[1:n:2])
    p = tie_probability(g, tau)
    assert abs(p - g / (2 * tau)) / p < 0.01
    assert abs(ties - p) < 4 * np.sqrt(p * (1 - p) / (n // 2))


def test_freerunning_slow_vs_fast_clock():
    ph = gen_poisson_arrivals(1e7, 0.5, 7).times  # mean interval 100 ns
    slow = stats.measure(extract_t1t2_freerunning(ph, ClockParams(200 * NS)), 1)
    fast = stats.measure(extract_t1t2_freerunning(ph, ClockParams(1 * NS)), 1)
    rest = stats.measure(extract_t1t2(ph, ClockParams(200 * NS)), 1)
    assert abs(slow.a(1)) > 5 * slow.sigma_a(1)
    assert abs(fast.a(1)) < 4 * fast.sigma_a(1)
    assert abs(rest.a(1)) < 4 * rest.sigma_a(1)


def test_pipeline_failed_detector():
    ph = gen_poisson_arrivals(1e7, 1e-3, 1)
    d0 = DetectionStream.from_events(ph.times[::3], Channel.D0)
    r = run_pipeline(d0, DetectionStream.empty(1e-3), BlankParams(0))
    assert not r.S.bits.any() and not r.Y.bits.any()
    assert r.C == r.T.relabel("C")


def test_pipeline_empty():
    r = run_pipeline(DetectionStream.empty(1e-3), DetectionStream.empty(1e-3))
    assert len(r.S) == len(r.Y) == len(r.T) == len(r.C) == 0
    assert r.f_G == 0 and r.f_B == 0


def test_pipeline_length_arithmetic():
    r = simulate(SimConfig(seed=3), duration=2e-3)
    assert len(r.Y) == len(r.S) // 2
    assert len(r.T) + r.tie_count == (r.n_accepted - 1) // 2
    assert len(r.C) == len(r.T) == len(r.y_paired)
    assert r.n_accepted + r.n_blanked == r.n_detected
    assert len(r.S) == r.n_accepted
    assert np.array_equal(r.C.bits, r.T.bits ^ r.y_paired.bits)


def test_pipeline_blockwise_equals_one_shot():
    cfg = SimConfig(seed=11, injection_rate=3e6)
    a = simulate(cfg, duration=1e-3, block_events=1 << 20)
    b = simulate(cfg, duration=1e-3, block_events=777)
    for s in ("S", "Y", "T", "C", "y_paired"):
        assert getattr(a, s) == getattr(b, s), s
    assert (a.n_blanked, a.tie_count) == (b.n_blanked, b.tie_count)


def test_combo_pipeline_feed_split():
    cfg = SimConfig(seed=2)
    blocks = []
    simulate(cfg, duration=5e-4, block_events=5000, on_block=lambda d0, d1: blocks.append((d0, d1)))
    pipe = ComboPipeline()
    for d0, d1 in blocks:
        pipe.feed(d0, d1)
    split = pipe.finish(5e-4)
    whole = run_pipeline(
        DetectionStream(*(np.concatenate([getattr(b[0], f) for b in blocks]) for f in ("times", "channel", "origin")), 5e-4),
        DetectionStream(*(np.concatenate([getattr(b[1], f) for b in blocks]) for f in ("times", "channel", "origin")), 5e-4),
    )
    for s in ("S", "Y", "T", "C"):
        assert getattr(split, s) == getattr(whole, s)


def test_blanking_beyond_dead_time_removes_correlation():
    cfg = SimConfig(detector=DetectorParams(afterpulse_prob=0.0), blank=BlankParams(30 * NS), seed=4)
    r = simulate(cfg, n_bits=2_000_000, stream="S")
    rep = stats.measure(r.S, 1)
    assert abs(rep.a(1)) < 4 * rep.sigma_a(1)


def test_nominal_markov_property():
    r = simulate(SimConfig(seed=5), n_bits=2_000_000, stream="S")
    for s in (r.S, r.T):
        assert stats.markov_check(stats.measure(s, 6)).passed
