"""Bias, serial autocorrelation and cross-correlation estimators for bit streams.

All sums are accumulated as exact Python integers; the only floating-point
step is the final division. For a 0/1 sequence with ``M`` ones out of ``N``
the lag-k autocorrelation numerator and denominator, scaled by ``N**2``, are

    num = N^2 P - M N (A + B) + n M^2
    den = N^2 A - 2 M N A + n M^2

with ``n = N - k``, ``A`` the ones among the first ``n`` bits, ``B`` the ones
among the last ``n`` bits and ``P`` the count of positions where both
``x_i`` and ``x_{i+k}`` are 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .bitstream import BitStream, as_bits


class DegenerateStreamError(ValueError):
    """Raised when a correlation is undefined (constant stream, zero variance)."""


class LagValue(NamedTuple):
    k: int
    value: float
    sigma: float


@dataclass(frozen=True)
class MetricsReport:
    """Bias and lag-1..k_max autocorrelation of one stream, with 1-sigma errors."""

    n_bits: int
    bias: float
    sigma_b: float
    autocorr: list[LagValue]
    label: str = ""

    def a(self, k: int) -> float:
        return self.autocorr[k - 1].value

    def sigma_a(self, k: int) -> float:
        return self.autocorr[k - 1].sigma

    def to_text(self) -> str:
        lines = [
            f"stream = {self.label or '-'}",
            f"n_bits = {self.n_bits}",
            f"bias = {self.bias:.9g}",
            f"sigma_b = {self.sigma_b:.9g}",
        ]
        for k, a, s in self.autocorr:
            lines.append(f"a_{k} = {a:.9g}")
            lines.append(f"sigma_{k} = {s:.9g}")
        return "\n".join(lines) + "\n"

    def csv_rows(self) -> list[list]:
        """Rows of ``stream_label, N, bias, sigma_b, k, a_k, sigma_k``."""
        return [[self.label, self.n_bits, self.bias, self.sigma_b, k, a, s] for k, a, s in self.autocorr]


CSV_HEADER = ["stream_label", "N", "bias", "sigma_b", "k", "a_k", "sigma_k"]


@dataclass(frozen=True)
class CrossCorrReport:
    lags: list[LagValue]
    n_bits: int = 0

    def at(self, k: int) -> LagValue:
        for lv in self.lags:
            if lv.k == k:
                return lv
        raise KeyError(k)

    def max_significance(self) -> float:
        return max(abs(v) / s for _, v, s in self.lags)


@dataclass(frozen=True)
class MarkovVerdict:
    z: float
    lags: list[tuple[int, float, float, bool]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(ok for *_, ok in self.lags)


def _ones(x: np.ndarray) -> int:
    return int(np.count_nonzero(x))


def bias(bits) -> tuple[float, float]:
    """``b = (ones / N) - 1/2`` and its standard error ``1 / (2 sqrt(N))``."""
    x = as_bits(bits)
    n = x.size
    if n == 0:
        raise ValueError("bias of an empty stream is undefined")
    return (2 * _ones(x) - n) / (2 * n), 1.0 / (2.0 * math.sqrt(n))


def _lag_sums(x: np.ndarray, m: int, k: int) -> tuple[int, int, int]:
    n = x.size - k
    head = _ones(x[:n])
    tail = m - _ones(x[:k]) if k else m
    both = _ones(x[:n] & x[k:]) if k else head
    return head, tail, both


def autocorr(bits, k_max: int = 6) -> list[LagValue]:
    """Serial autocorrelation coefficients ``a_1 .. a_kmax``, error ``1/sqrt(N-k)``.

    The sequence mean in both numerator and denominator is the mean over all
    ``N`` bits; the sums run over the first ``N - k`` positions.
    """
    x = as_bits(bits)
    big_n = x.size
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if big_n <= k_max:
        raise ValueError(f"need more than k_max={k_max} bits, got {big_n}")
    m = _ones(x)
    out = []
    for k in range(1, k_max + 1):
        n = big_n - k
        head, tail, both = _lag_sums(x, m, k)
        num = big_n * big_n * both - m * big_n * (head + tail) + n * m * m
        den = big_n * big_n * head - 2 * m * big_n * head + n * m * m
        if den == 0:
            raise DegenerateStreamError("degenerate stream: zero variance")
        out.append(LagValue(k, num / den, 1.0 / math.sqrt(n)))
    return out


def crosscorr(x, y, k_max: int = 6) -> CrossCorrReport:
    """Normalized cross-correlation ``a_xy(k)`` for ``k`` in ``[-k_max, k_max]``.

    Positive ``k`` pairs ``x_i`` with ``y_{i+k}``; negative ``k`` swaps the
    roles of the two streams. Both are truncated to their common length.
    """
    xb, yb = as_bits(x), as_bits(y)
    big_n = min(xb.size, yb.size)
    xb, yb = xb[:big_n], yb[:big_n]
    if big_n < 2 or big_n <= k_max:
        raise ValueError("streams too short for the requested lags")
    mx, my = _ones(xb), _ones(yb)
    lags = []
    for k in range(-k_max, k_max + 1):
        a, b, ma, mb = (xb, yb, mx, my) if k >= 0 else (yb, xb, my, mx)
        j = abs(k)
        n = big_n - j
        a_head = _ones(a[:n])
        b_tail = mb - _ones(b[:j]) if j else mb
        b_head = _ones(b[:n])
        both = _ones(a[:n] & b[j:])
        num = big_n * big_n * both - big_n * (mb * a_head + ma * b_tail) + n * ma * mb
        var_a = big_n * big_n * a_head - 2 * ma * big_n * a_head + n * ma * ma
        var_b = big_n * big_n * b_head - 2 * mb * big_n * b_head + n * mb * mb
        if var_a == 0 or var_b == 0:
            raise DegenerateStreamError("degenerate stream: zero variance")
        lags.append(LagValue(k, num / math.sqrt(var_a) / math.sqrt(var_b), 1.0 / math.sqrt(n)))
    return CrossCorrReport(lags, big_n)


def measure(bits, k_max: int = 6, label: str | None = None) -> MetricsReport:
    """Bias plus autocorrelations in one report."""
    if label is None:
        label = bits.label if isinstance(bits, BitStream) else ""
    x = as_bits(bits)
    b, sb = bias(x)
    return MetricsReport(x.size, b, sb, autocorr(x, k_max), label)


def markov_check(report: MetricsReport, z: float = 4.0) -> MarkovVerdict:
    """Compare ``a_k`` with ``a_1 ** k`` for every ``k >= 2`` at ``z`` sigma."""
    if len(report.autocorr) < 2:
        raise ValueError("markov_check needs k_max >= 2")
    a1 = report.autocorr[0].value
    rows = []
    for k, a, s in report.autocorr[1:]:
        expect = a1**k
        rows.append((k, a, expect, abs(a - expect) <= z * s))
    return MarkovVerdict(z, rows)
