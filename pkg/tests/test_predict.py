import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from oracles import pairxor_oracle, xor_oracle

from combo_rng import stats
from combo_rng.extract import combine, derive_y
from combo_rng.predict import (
    DeadTimeModel,
    DegenerateModelError,
    MarkovBitModel,
    gen_markov_bits,
    predict_deadtime_autocorr,
    predict_f0,
    predict_net_autocorr,
    prediction_report,
    propagate_pairxor,
    propagate_xor,
    required_sample_size,
)

NS = 1000


def test_deadtime_autocorr_examples():
    r = predict_deadtime_autocorr(40 * NS, 1000 * NS)
    assert r.exact == pytest.approx(-0.0392, abs=5e-5)
    assert r.approx == pytest.approx(-0.04)
    assert predict_deadtime_autocorr(0, 1000).exact == 0
    assert predict_deadtime_autocorr(5, 5).exact == pytest.approx(math.exp(-1) - 1)
    with pytest.raises(ValueError):
        predict_deadtime_autocorr(1, 0)


def test_net_autocorr_examples():
    assert predict_net_autocorr(DeadTimeModel(24 * NS, 769 * NS, 0.031)) == pytest.approx(0, abs=5e-4)
    assert predict_net_autocorr(DeadTimeModel(24 * NS, 1000 * NS, 0.0)) == pytest.approx(-0.024)
    assert predict_net_autocorr(DeadTimeModel(24 * NS, 100 * NS, 0.031)) == pytest.approx(-0.209)


def test_net_autocorr_sign_structure():
    f0 = predict_f0(0.031, 24 * NS)
    for f in (0.2 * f0, 0.9 * f0):
        assert predict_net_autocorr(DeadTimeModel(24 * NS, 1e12 / f, 0.031)) > 0
    for f in (1.1 * f0, 5 * f0):
        assert predict_net_autocorr(DeadTimeModel(24 * NS, 1e12 / f, 0.031)) < 0


def test_f0_examples():
    assert predict_f0(0.031, 24 * NS) == pytest.approx(1.2917e6, rel=1e-4)
    assert predict_f0(0.0, 24 * NS) == 0
    assert predict_f0(0.1, 40 * NS) == pytest.approx(2.5e6)
    with pytest.raises(ValueError):
        predict_f0(0.1, 0)


def test_markov_model_validation():
    MarkovBitModel(0.1, -0.2)
    for b, a in ((0.6, 0), (0, 1.5), (0.4, -0.9)):
        with pytest.raises(ValueError):
            MarkovBitModel(b, a)


def test_pairxor_examples():
    p = propagate_pairxor(MarkovBitModel(227e-6, -149e-6))
    assert p.model.b == pytest.approx(75e-6, abs=1e-6)
    assert abs(p.model.a) < 1e-9
    z = propagate_pairxor(MarkovBitModel(0, 0))
    assert z.model == MarkovBitModel(0, 0)
    # b = 0.5 gives all ones, so Y is all zeros and its autocorrelation is 0/0
    with pytest.raises(DegenerateModelError):
        propagate_pairxor(MarkovBitModel(0.5, 0.0))


GRID_B = np.linspace(-0.1, 0.1, 5)
GRID_A = np.linspace(-0.2, 0.2, 5)


@pytest.mark.parametrize("b", GRID_B)
@pytest.mark.parametrize("a", GRID_A)
def test_pairxor_matches_enumeration(b, a):
    got = propagate_pairxor(MarkovBitModel(b, a)).model
    ref_b, ref_a = pairxor_oracle(b, a)
    assert abs(got.b - ref_b) < 1e-10
    assert abs(got.a - ref_a) < 1e-10


@pytest.mark.parametrize("bt,at,by,ay", [(0.01, 0.02, -0.03, 0.05), (-0.1, -0.2, 0.1, 0.2), (0.3, 0.1, 0.2, -0.3)])
def test_xor_matches_enumeration(bt, at, by, ay):
    got = propagate_xor(MarkovBitModel(bt, at), MarkovBitModel(by, ay)).model
    ref_b, ref_a = xor_oracle(bt, at, by, ay)
    assert abs(got.b - ref_b) < 1e-12
    assert abs(got.a - ref_a) < 1e-12


def test_xor_examples():
    t = MarkovBitModel(-125e-6, 48e-6)
    assert propagate_xor(t, MarkovBitModel(0, 0)).model == MarkovBitModel(0, 0)
    p = propagate_xor(t, MarkovBitModel(75e-6, 0))
    assert p.model.b == pytest.approx(1.875e-8, rel=1e-6)  # sign: bias_T < 0, bias_Y > 0 gives C > 0
    assert p.model.a == pytest.approx(48e-6 * 4 * 75e-6**2, rel=1e-6)
    assert p.approx[1] == pytest.approx(1.08e-12, rel=1e-2)


@settings(max_examples=200, deadline=None)
@given(bt=st.floats(-0.5, 0.5), by=st.floats(-0.5, 0.5))
def test_xor_never_worsens_bias(bt, by):
    assume(abs(bt) < 0.5 or abs(by) < 0.5)  # both constant: no autocorrelation to define
    b = propagate_xor(MarkovBitModel(bt, 0), MarkovBitModel(by, 0)).model.b
    assert abs(b) <= 2 * abs(bt) * abs(by) + 1e-15
    assert abs(b) <= min(abs(bt), abs(by)) + 1e-15


@settings(max_examples=200, deadline=None)
@given(b=st.floats(-1e-2, 1e-2), a=st.floats(-1e-2, 1e-2))
def test_exact_and_approx_agree_in_small_regime(b, a):
    p = propagate_pairxor(MarkovBitModel(b, a))
    assert p.approx_valid
    bx, ax = p.approx
    # dropped terms are O(a b^2) in b_Y and O(a + b^2) relative in a_Y
    assert abs(p.model.b - bx) <= 2.5 * abs(a) * b * b + 1e-18
    assert abs(p.model.a - ax) <= (2.5 * abs(a) + 5 * b * b) * abs(p.model.a) + 1e-18


def test_required_sample_size_examples():
    n = required_sample_size(MarkovBitModel(7.1e-8, 3.7e-12), z=1)
    assert 4.9e13 < n < 5.0e13
    assert required_sample_size(MarkovBitModel(0.5, 0), z=1) == 1
    assert required_sample_size(MarkovBitModel(0.001, 0)) == 960_400
    assert required_sample_size(MarkovBitModel(0, 0.01), z=2) == 40_001
    assert math.isinf(required_sample_size(MarkovBitModel(0, 0)))
    with pytest.raises(ValueError):
        required_sample_size(MarkovBitModel(0.1, 0), z=0)


def test_gen_markov_null():
    rep = stats.measure(gen_markov_bits(MarkovBitModel(0, 0), 10**7, 1), 1)
    assert abs(rep.bias) < 4 * rep.sigma_b and abs(rep.a(1)) < 4 * rep.sigma_a(1)


def test_gen_markov_bias():
    rep = stats.measure(gen_markov_bits(MarkovBitModel(0.1, 0), 10**6, 2), 1)
    assert abs(rep.bias - 0.1) < 4 * rep.sigma_b
    assert abs(rep.a(1)) < 4 * rep.sigma_a(1)


def test_gen_markov_decay():
    rep = stats.measure(gen_markov_bits(MarkovBitModel(0, -0.5), 10**6, 3), 3)
    assert abs(rep.a(1) + 0.5) < 4 * rep.sigma_a(1)
    assert abs(rep.a(2) - 0.25) < 4 * rep.sigma_a(2)
    assert stats.markov_check(rep).passed


def test_gen_markov_deterministic_and_sized():
    m = MarkovBitModel(0.05, 0.1)
    a = gen_markov_bits(m, 12_345, 9)
    assert a == gen_markov_bits(m, 12_345, 9)
    assert len(a) == 12_345
    assert len(gen_markov_bits(m, 0, 1)) == 0


def test_pairxor_against_synthetic_stream():
    m = MarkovBitModel(0.05, 0.1)
    y = stats.measure(derive_y(gen_markov_bits(m, 4 * 10**6, 5)), 1)
    pred = propagate_pairxor(m).model
    assert abs(y.bias - pred.b) < 4 * y.sigma_b
    assert abs(y.a(1) - pred.a) < 4 * y.sigma_a(1)


def test_xor_against_synthetic_streams():
    t, y = MarkovBitModel(0.1, 0.2), MarkovBitModel(-0.15, 0.1)
    c = stats.measure(combine(gen_markov_bits(t, 4 * 10**6, 6), gen_markov_bits(y, 4 * 10**6, 7)), 1)
    pred = propagate_xor(t, y).model
    assert abs(c.bias - pred.b) < 4 * c.sigma_b
    assert abs(c.a(1) - pred.a) < 4 * c.sigma_a(1)


def test_required_sample_size_power():
    # at N_req the estimator sits at z sigma from zero on average, so about half
    # of the streams cross the z threshold; at 4 N_req the margin doubles
    m = MarkovBitModel(0.001, 0)
    n = int(required_sample_size(m))
    rng = np.random.default_rng(17)
    p1 = m.p1

    def detect_frac(size):
        ones = rng.binomial(size, p1, 400)
        b = ones / size - 0.5
        return np.mean(np.abs(b) > 1.96 / (2 * np.sqrt(size)))

    assert 0.4 < detect_frac(n) < 0.6
    assert detect_frac(4 * n) > 0.9


def test_prediction_report_format():
    rep = prediction_report(MarkovBitModel(0.01, -0.5), 3, "S")
    assert rep.a(3) == pytest.approx(-0.125)
    assert "a_2 = 0.25" in rep.to_text()
