"""Closed-form randomness predictions.

Bit streams are modelled as stationary two-state Markov chains described by
their bias ``b = p(1) - 1/2`` and lag-1 autocorrelation ``a``; for such a
chain ``a_k = a**k``. Times are integer (or float) picoseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from .bitstream import BitAccumulator, BitStream
from .stats import LagValue, MetricsReport
from .units import PS_PER_S

_CHUNK = 1 << 22


class DegenerateModelError(ValueError):
    pass


@dataclass(frozen=True)
class MarkovBitModel:
    """Stationary binary Markov chain with bias ``b`` and lag-1 autocorrelation ``a``.

    Transition probabilities are ``p(1|1) = p1 + a*p0`` and
    ``p(1|0) = p1 - a*p1`` with ``p1 = 1/2 + b``.
    """

    b: float
    a: float

    def __post_init__(self):
        if abs(self.b) > 0.5 or abs(self.a) > 1:
            raise ValueError(f"invalid Markov model (b={self.b}, a={self.a})")
        eps = 1e-12
        if not (-eps <= self.p11 <= 1 + eps and -eps <= self.p10 <= 1 + eps):
            raise ValueError(f"(b={self.b}, a={self.a}) implies transition probabilities outside [0, 1]")

    @property
    def p1(self) -> float:
        return 0.5 + self.b

    @property
    def p0(self) -> float:
        return 0.5 - self.b

    @property
    def p11(self) -> float:
        return self.p1 + self.a * self.p0

    @property
    def p10(self) -> float:
        return self.p1 - self.a * self.p1


@dataclass(frozen=True)
class DeadTimeModel:
    tau_d: float
    tau: float
    p_a: float = 0.0

    def __post_init__(self):
        if not self.tau > 0 or self.tau_d < 0 or not 0 <= self.p_a < 1:
            raise ValueError("need tau > 0, tau_d >= 0, 0 <= p_a < 1")


class ExactApprox(NamedTuple):
    exact: float
    approx: float


@dataclass(frozen=True)
class Propagation:
    """Output model of an XOR stage with its leading-order approximation.

    ``approx_valid`` is True when the inputs are in the small-imperfection
    regime (|a| <= 0.01 and b**2 <= 0.0025) where the approximation holds.
    """

    model: MarkovBitModel
    approx: tuple[float, float]
    approx_valid: bool


def predict_deadtime_autocorr(tau_d: float, tau: float) -> ExactApprox:
    """Lag-1 autocorrelation from dead time alone: ``exp(-tau_d/tau) - 1`` (approx. ``-tau_d/tau``)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if tau_d < 0:
        raise ValueError("tau_d must be non-negative")
    x = tau_d / tau
    return ExactApprox(math.expm1(-x), -x)


def predict_net_autocorr(model: DeadTimeModel) -> float:
    """Afterpulsing minus dead time: ``p_a - tau_d / tau``."""
    return model.p_a - model.tau_d / model.tau


def predict_f0(p_a: float, tau_d: float) -> float:
    """Detection rate (per second) where afterpulse and dead-time correlations cancel.

    ``tau_d`` is in picoseconds.
    """
    if not tau_d > 0:
        raise ValueError("tau_d must be positive")
    return p_a / (tau_d / PS_PER_S)


def _small(m: MarkovBitModel) -> bool:
    return abs(m.a) <= 1e-2 and m.b * m.b <= 2.5e-3


def propagate_pairxor(m: MarkovBitModel) -> Propagation:
    """Bias and autocorrelation of ``y_i = s_2i XOR s_2i+1`` for a Markov input.

    b_Y = -2 b^2 - 2 a (1/4 - b^2)
    a_Y = 2 a (1 - a) b^2 / (1 - 2 (1 - a)(1/4 - b^2))
    """
    b, a = m.b, m.a
    q = 0.25 - b * b
    b_y = -2 * b * b - 2 * a * q
    den = 1 - 2 * (1 - a) * q
    if den == 0 or abs(b_y) == 0.5:
        raise DegenerateModelError("pair-XOR output is constant; autocorrelation undefined")
    a_y = 2 * a * (1 - a) * b * b / den
    approx = (-2 * b * b - a / 2, 4 * a * b * b)
    return Propagation(MarkovBitModel(b_y, a_y), approx, _small(m))


def propagate_xor(t: MarkovBitModel, y: MarkovBitModel) -> Propagation:
    """Bias and autocorrelation of ``c_i = t_i XOR y_i`` for independent inputs.

    With ``u = 1 - 2x`` the XOR becomes a product, ``E[u] = -2b`` and
    ``E[u_i u_i+1] = a (1 - 4 b^2) + 4 b^2``, which gives

        b_C = -2 b_T b_Y
        a_C = [a_T a_Y (1-4b_T^2)(1-4b_Y^2) + 4 a_T b_Y^2 (1-4b_T^2)
               + 4 a_Y b_T^2 (1-4b_Y^2)] / (1 - 16 b_T^2 b_Y^2)

    The leading-order form ``a_T a_Y + 4 (a_T b_Y^2 + a_Y b_T^2)`` is
    reported as ``approx``.
    """
    bt, at, by, ay = t.b, t.a, y.b, y.a
    vt = 1 - 4 * bt * bt
    vy = 1 - 4 * by * by
    b_c = -2 * bt * by
    den = 1 - 16 * bt * bt * by * by
    if den == 0:
        raise DegenerateModelError("XOR output is constant; autocorrelation undefined")
    a_c = (at * ay * vt * vy + 4 * at * by * by * vt + 4 * ay * bt * bt * vy) / den
    approx = (b_c, at * ay + 4 * (at * by * by + ay * bt * bt))
    return Propagation(MarkovBitModel(b_c, a_c), approx, _small(t) and _small(y))


def required_sample_size(m: MarkovBitModel, z: float = 1.96) -> float:
    """Smallest N at which the bias or the autocorrelation reaches ``z`` standard errors.

    ``N_b = (z / 2|b|)^2`` and ``N_a = z^2 / a^2 + 1``; returns the smaller,
    rounded up, or ``inf`` for a perfect (0, 0) model.
    """
    if not z > 0:
        raise ValueError("z must be positive")
    candidates = []
    if m.b != 0:
        candidates.append((z / (2 * abs(m.b))) ** 2)
    if m.a != 0:
        candidates.append(z * z / (m.a * m.a) + 1)
    if not candidates:
        return math.inf
    n = min(candidates)
    return float(max(1, math.ceil(n * (1 - 1e-12))))


def prediction_report(m: MarkovBitModel, k_max: int = 6, label: str = "") -> MetricsReport:
    """A model's predictions in the estimator report format (sigmas are zero)."""
    return MetricsReport(0, m.b, 0.0, [LagValue(k, m.a**k, 0.0) for k in range(1, k_max + 1)], label)


@numba.njit(cache=True)
def _markov_scan(u, first, p11, p10, out):
    prev = first
    for i in range(u.size):
        p = p11 if prev == 1 else p10
        bit = 1 if u[i] < p else 0
        out[i] = bit
        prev = bit
    return prev


def gen_markov_bits(m: MarkovBitModel, n: int, seed, label: str = "") -> BitStream:
    """``n`` bits of the stationary chain ``m``; the first bit is drawn from p(1)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = np.random.default_rng(seed)
    acc = BitAccumulator(label)
    if n == 0:
        return acc.to_stream()
    prev = 1 if rng.random() < m.p1 else 0
    acc.extend(np.array([prev], dtype=np.uint8))
    remaining = n - 1
    p11, p10 = min(max(m.p11, 0.0), 1.0), min(max(m.p10, 0.0), 1.0)
    while remaining:
        k = min(_CHUNK, remaining)
        out = np.empty(k, dtype=np.uint8)
        prev = _markov_scan(rng.random(k), prev, p11, p10, out)
        acc.extend(out)
        remaining -= k
    return acc.to_stream()
