"""A subset of the NIST SP 800-22 statistical tests, plus bit-file export.

Implemented: Frequency, Block Frequency, Runs, Cumulative Sums (forward and
backward), Serial and Approximate Entropy, all with the NIST default
parameters. The remaining tests of the suite need large template tables or
FFT machinery; run them externally on files written by :func:`export_bits`.

Special functions come from :mod:`scipy.special` (``erfc``, ``gammaincc``,
``ndtr``); the test suite checks them against high-precision reference values.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erfc, gammaincc, ndtr

from .bitstream import BitStream, as_bits

ALPHA = 0.01
SEQ_LEN = 10**6
BLOCK_LEN = 128
SERIAL_M = 16
APEN_M = 10
MIN_BITS = 100


class SequenceTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class TestResult:
    """Outcome of one test on one sequence.

    Attributes:
        name: Test name as it appears in suite reports.
        p_value: The p-value (the first one for Serial).
        passed: ``p_value >= alpha`` for every p-value of the test.
        params: Parameters used.
        p_values: All p-values the test produced.
        prerequisite_failed: True when the test did not run because its
            precondition on the input failed (Runs only); ``p_value`` is 0.
    """

    __test__ = False

    name: str
    p_value: float
    passed: bool
    params: dict = field(default_factory=dict)
    p_values: tuple[float, ...] = ()
    prerequisite_failed: bool = False


def _result(name, ps, alpha, params, prereq=False) -> TestResult:
    ps = tuple(float(min(max(p, 0.0), 1.0)) for p in ps)
    return TestResult(name, ps[0], all(p >= alpha for p in ps) and not prereq, params, ps, prereq)


def _prep(bits, min_len: int = MIN_BITS) -> np.ndarray:
    x = as_bits(bits)
    if x.size < min_len:
        raise SequenceTooShortError(f"need at least {min_len} bits, got {x.size}")
    return x


def test_frequency(bits, alpha: float = ALPHA) -> TestResult:
    """Monobit test: ``p = erfc(|S_n| / sqrt(2n))``."""
    x = _prep(bits)
    n = x.size
    s = abs(2 * int(np.count_nonzero(x)) - n)
    return _result("Frequency", [erfc(s / math.sqrt(2 * n))], alpha, {})


def test_block_frequency(bits, block_len: int = BLOCK_LEN, alpha: float = ALPHA) -> TestResult:
    """Chi-square of per-block one fractions over ``n // block_len`` blocks."""
    if block_len < 1:
        raise ValueError("block_len must be positive")
    x = _prep(bits, max(MIN_BITS, 100 * block_len))
    return _result("BlockFrequency", [_block_frequency_pvalue(x, block_len)], alpha, {"block_len": block_len})


def _block_frequency_pvalue(x: np.ndarray, block_len: int) -> float:
    nb = x.size // block_len
    ones = x[: nb * block_len].reshape(nb, block_len).sum(axis=1, dtype=np.int64)
    # 4M * sum((ones/M - 1/2)^2), numerator kept in integers
    chi2 = float(np.sum((2 * ones - block_len) ** 2)) / block_len
    return gammaincc(nb / 2, chi2 / 2)


def test_runs(bits, alpha: float = ALPHA) -> TestResult:
    """Total number of runs against its expectation given the one fraction.

    If the one fraction is 2/sqrt(n) or more away from 1/2 the test is not
    applicable; the result is flagged ``prerequisite_failed`` with p = 0.
    """
    x = _prep(bits)
    n = x.size
    pi = np.count_nonzero(x) / n
    if abs(pi - 0.5) >= 2 / math.sqrt(n):
        return _result("Runs", [0.0], alpha, {}, prereq=True)
    v = 1 + int(np.count_nonzero(x[1:] != x[:-1]))
    q = pi * (1 - pi)
    p = erfc(abs(v - 2 * n * q) / (2 * math.sqrt(2 * n) * q))
    return _result("Runs", [p], alpha, {})


def _cdiv(a: int, b: int) -> int:
    """Integer division truncating toward zero, as in the reference C code."""
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b > 0) else -q


def cusum_pvalue(z: int, n: int) -> float:
    """Tail probability of the maximal partial-sum excursion ``z`` over ``n`` steps."""
    if z <= 0:
        return 1.0
    r = math.sqrt(n)
    k1 = np.arange(_cdiv(_cdiv(-n, z) + 1, 4), _cdiv(_cdiv(n, z) - 1, 4) + 1)
    k2 = np.arange(_cdiv(_cdiv(-n, z) - 3, 4), _cdiv(_cdiv(n, z) - 1, 4) + 1)
    s1 = np.sum(ndtr((4 * k1 + 1) * z / r) - ndtr((4 * k1 - 1) * z / r))
    s2 = np.sum(ndtr((4 * k2 + 3) * z / r) - ndtr((4 * k2 + 1) * z / r))
    return float(1.0 - s1 + s2)


def test_cusum(bits, mode: str = "forward", alpha: float = ALPHA) -> TestResult:
    """Maximal excursion of the +-1 random walk, read forward or backward."""
    if mode not in ("forward", "backward"):
        raise ValueError("mode must be 'forward' or 'backward'")
    x = _prep(bits)
    walk = np.cumsum(2 * x.astype(np.int64) - 1) if mode == "forward" else np.cumsum(2 * x[::-1].astype(np.int64) - 1)
    z = int(np.abs(walk).max())
    name = "CumulativeSums" + ("-forward" if mode == "forward" else "-backward")
    return _result(name, [cusum_pvalue(z, x.size)], alpha, {"mode": mode})


def _pattern_counts(x: np.ndarray, m: int) -> np.ndarray:
    """Counts of all overlapping m-bit patterns with the sequence wrapped around."""
    if m == 0:
        return np.array([x.size], dtype=np.int64)
    ext = np.concatenate([x, x[: m - 1]]).astype(np.uint32)
    n = x.size
    vals = np.zeros(n, dtype=np.uint32)
    for j in range(m):
        vals <<= 1
        vals |= ext[j : j + n]
    return np.bincount(vals, minlength=1 << m).astype(np.int64)


def _psi2(x: np.ndarray, m: int) -> float:
    if m <= 0:
        return 0.0
    c = _pattern_counts(x, m)
    # (2^m / n) * sum(c^2) - n, with the sum kept exact
    return (int(np.dot(c, c)) << m) / x.size - x.size


def _check_m(m: int, n: int, slack: int) -> None:
    if m < 1:
        raise ValueError(f"pattern length m={m} must be >= 1")
    if m >= int(math.floor(math.log2(n))) - slack:
        raise SequenceTooShortError(f"pattern length m={m} needs floor(log2 n) - {slack} > m, got n={n}")


def test_serial(bits, m: int = SERIAL_M, alpha: float = ALPHA) -> TestResult:
    """Generalized serial test on overlapping m-bit patterns; both p-values must pass."""
    x = _prep(bits)
    if m < 2:
        raise ValueError("serial test needs m >= 2")
    _check_m(m, x.size, 2)
    return _result("Serial", _serial_pvalues(x, m), alpha, {"m": m})


def _serial_pvalues(x: np.ndarray, m: int) -> list[float]:
    p0, p1, p2 = _psi2(x, m), _psi2(x, m - 1), _psi2(x, m - 2)
    d1 = p0 - p1
    d2 = p0 - 2 * p1 + p2
    return [gammaincc(2.0 ** (m - 2), d1 / 2), gammaincc(2.0 ** (m - 3), d2 / 2)]


def _phi(x: np.ndarray, m: int) -> float:
    c = _pattern_counts(x, m)
    c = c[c > 0].astype(float)
    p = c / x.size
    return float(np.sum(p * np.log(p)))


def test_approx_entropy(bits, m: int = APEN_M, alpha: float = ALPHA) -> TestResult:
    """Approximate entropy of m and m+1 bit patterns compared with ln 2."""
    x = _prep(bits)
    _check_m(m, x.size, 2)
    return _result("ApproximateEntropy", [_apen_pvalue(x, m)], alpha, {"m": m})


def _apen_pvalue(x: np.ndarray, m: int) -> float:
    apen = _phi(x, m) - _phi(x, m + 1)
    chi2 = 2 * x.size * (math.log(2) - apen)
    return gammaincc(2.0 ** (m - 1), chi2 / 2)


# Suite rows in report order; Serial contributes two rows like the reference tool.
ROWS = (
    "Frequency",
    "BlockFrequency",
    "CumulativeSums-forward",
    "CumulativeSums-backward",
    "Runs",
    "Serial-1",
    "Serial-2",
    "ApproximateEntropy",
)


def run_sequence(bits, alpha: float = ALPHA) -> list[TestResult]:
    """All implemented tests with default parameters on one sequence."""
    x = as_bits(bits)
    return [
        test_frequency(x, alpha),
        test_block_frequency(x, alpha=alpha),
        test_cusum(x, "forward", alpha),
        test_cusum(x, "backward", alpha),
        test_runs(x, alpha),
        test_serial(x, alpha=alpha),
        test_approx_entropy(x, alpha=alpha),
    ]


def _row_pvalues(results: list[TestResult]) -> dict[str, float]:
    out = {}
    for r in results:
        if r.name == "Serial":
            out["Serial-1"], out["Serial-2"] = r.p_values
        else:
            out[r.name] = r.p_value
    return out


def proportion_threshold(m: int, alpha: float = ALPHA) -> float:
    """Minimum pass proportion ``p - 3 sqrt(p (1-p) / m)`` with ``p = 1 - alpha``."""
    p = 1 - alpha
    return p - 3 * math.sqrt(p * (1 - p) / m)


def uniformity_pvalue(pvalues) -> float:
    """Chi-square p-value for the p-values being uniform over 10 equal bins."""
    p = np.asarray(pvalues, dtype=float)
    counts = np.histogram(p, bins=10, range=(0.0, 1.0))[0]
    expect = p.size / 10
    chi2 = float(np.sum((counts - expect) ** 2) / expect)
    return float(gammaincc(4.5, chi2 / 2))


@dataclass(frozen=True)
class SuiteRow:
    test: str
    sequences: int
    pass_count: int
    threshold: float
    min_p: float
    median_p: float
    uniformity_p: float

    @property
    def passed(self) -> bool:
        return self.pass_count >= self.threshold * self.sequences


@dataclass(frozen=True)
class SuiteResult:
    """Per-sequence results and the per-test pass proportions."""

    results: list[list[TestResult]]
    rows: list[SuiteRow]
    alpha: float
    seq_len: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def row(self, test: str) -> SuiteRow:
        for r in self.rows:
            if r.test == test:
                return r
        raise KeyError(test)

    def csv_rows(self) -> list[list]:
        m = len(self.results)
        return [
            [r.test, r.sequences, r.pass_count, math.ceil(r.threshold * m), r.min_p, r.median_p, r.uniformity_p]
            for r in self.rows
        ]

    def to_text(self) -> str:
        m = len(self.results)
        lines = [f"{'test':<26}{'proportion':>14}{'median p':>12}{'uniform p':>12}  pass"]
        for r in self.rows:
            prop = f"{r.pass_count}/{m} >= {math.ceil(r.threshold * m)}"
            lines.append(f"{r.test:<26}{prop:>14}{r.median_p:>12.4f}{r.uniformity_p:>12.4f}  {'yes' if r.passed else 'NO'}")
        return "\n".join(lines) + "\n"


SUITE_CSV_HEADER = ["test", "sequences", "pass_count", "threshold", "min_p", "median_p", "uniformity_p"]


def _run_chunk(args):
    x, alpha = args
    return run_sequence(x, alpha)


def run_suite(bits, seq_len: int = SEQ_LEN, alpha: float = ALPHA, jobs: int = 1) -> SuiteResult:
    """Split ``bits`` into sequences of ``seq_len`` and run every test on each.

    Trailing bits that do not fill a sequence are ignored.
    """
    x = as_bits(bits)
    m = x.size // seq_len
    if m < 2:
        raise SequenceTooShortError(f"need at least 2 sequences of {seq_len} bits, got {x.size} bits")
    seqs = [x[i * seq_len : (i + 1) * seq_len] for i in range(m)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_run_chunk, [(s, alpha) for s in seqs]))
    else:
        results = [run_sequence(s, alpha) for s in seqs]
    table = [_row_pvalues(r) for r in results]
    thr = proportion_threshold(m, alpha)
    rows = []
    for name in ROWS:
        ps = np.array([t[name] for t in table])
        rows.append(
            SuiteRow(name, m, int(np.count_nonzero(ps >= alpha)), thr, float(ps.min()), float(np.median(ps)), uniformity_pvalue(ps))
        )
    return SuiteResult(results, rows, alpha, seq_len)


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta")


def export_bits(bits, path, fmt: str = "ascii") -> Path:
    """Write bits as ASCII ``0``/``1`` characters or packed bytes.

    Packed files store the first bit in the most significant position and
    zero-pad the final byte; a ``<path>.meta`` sidecar records ``n_bits`` and
    ``pad``.
    """
    path = Path(path)
    x = as_bits(bits)
    try:
        if fmt == "ascii":
            path.write_bytes((x + ord("0")).astype(np.uint8).tobytes())
        elif fmt == "packed":
            packed = bits.packed if isinstance(bits, BitStream) else np.packbits(x)
            path.write_bytes(packed.tobytes())
            _meta_path(path).write_text(f"n_bits = {x.size}\npad = {(-x.size) % 8}\n")
        else:
            raise ValueError(f"unknown format {fmt!r} (use ascii or packed)")
    except OSError as e:
        raise OSError(f"cannot write bit file {path}: {e.strerror or e}") from e
    return path


def import_bits(path, fmt: str = "ascii", label: str = "") -> BitStream:
    """Read a file written by :func:`export_bits` (ASCII whitespace is ignored)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
        if fmt == "ascii":
            arr = np.frombuffer(raw, dtype=np.uint8)
            arr = arr[~np.isin(arr, np.frombuffer(b" \t\r\n", dtype=np.uint8))]
            bad = (arr != ord("0")) & (arr != ord("1"))
            if bad.any():
                raise ValueError(f"{path}: non-binary character at offset {int(np.argmax(bad))}")
            return BitStream.from_bits(arr - ord("0"), label)
        if fmt == "packed":
            n = 8 * len(raw)
            meta = _meta_path(path)
            if meta.exists():
                vals = dict(
                    (k.strip(), v.strip()) for k, _, v in (ln.partition("=") for ln in meta.read_text().splitlines()) if k.strip()
                )
                n = int(vals["n_bits"]) if "n_bits" in vals else 8 * len(raw) - int(vals.get("pad", 0))
            return BitStream.from_bits(np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=n), label)
        raise ValueError(f"unknown format {fmt!r} (use ascii or packed)")
    except OSError as e:
        raise OSError(f"cannot read bit file {path}: {e.strerror or e}") from e
