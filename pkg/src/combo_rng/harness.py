"""Scenario orchestration: nominal run, sweeps, failure, attack and monitoring.

Every scenario point is an independent simulation whose seed is derived from
the scenario seed and the point index, so points can run in any order or in
parallel and still give identical results.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__, stats
from .config import ConfigError, build_params, dump_config
from .detector import DetectionStream, DetectorParams, Origin, merge_channels
from .extract import BlankParams, ClockParams, blank_grid
from .predict import MarkovBitModel, propagate_pairxor, propagate_xor
from .simulate import STREAMS, SimConfig, simulate
from .units import PS_PER_S

log = logging.getLogger(__name__)

DESK_BITS = 10**7
FULL_BITS = 10**9
NOMINAL_RATE = 10e6
ALARM_Z = 4.0


class Mode(Enum):
    NOMINAL = "nominal"
    RATE_SWEEP = "rate-sweep"
    BLANK_SWEEP = "blank-sweep"
    DETECTOR_FAILURE = "detector-failure"
    INJECTION_ATTACK = "injection-attack"
    MONITORING = "monitoring"


DEFAULT_GRIDS: dict[Mode, tuple[float, ...]] = {
    Mode.NOMINAL: (),
    Mode.RATE_SWEEP: tuple(k * 1e6 for k in range(1, 10)),
    Mode.BLANK_SWEEP: tuple(float(blank_grid(k)) for k in range(7)),
    Mode.DETECTOR_FAILURE: (0.0, 2.5e6, 5e6, 7.5e6, 10e6),
    Mode.INJECTION_ATTACK: tuple(k * 1e6 for k in range(8)),
    # detected rates for the two failure curves; the attack curve reuses the injection grid
    Mode.MONITORING: (10e6, 7.5e6, 5e6, 2.5e6, 0.0),
}

X_LABELS = {
    Mode.NOMINAL: "point",
    Mode.RATE_SWEEP: "f_detector",
    Mode.BLANK_SWEEP: "blank_window_ps",
    Mode.DETECTOR_FAILURE: "f_d1",
    Mode.INJECTION_ATTACK: "f_inject",
    Mode.MONITORING: "x",
}


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to reproduce a scenario.

    Attributes:
        mode: Which scenario to run.
        f_d0, f_d1: Target detected rates per detector (counts/s).
        injection_rate: Periodic injection rate (Hz), 0 for no attack.
        injection_phase: Injection phase in ps, ``None`` for half a period.
        detector, blank, clock: Physical parameters.
        n_target_bits: Bits of ``stream`` to collect per point.
        seed: Scenario seed.
        stream: Stream whose length stops each run.
        k_max: Largest autocorrelation lag reported.
        grid: Sweep values; empty means the mode's default grid.
    """

    mode: Mode = Mode.NOMINAL
    f_d0: float = NOMINAL_RATE
    f_d1: float = NOMINAL_RATE
    injection_rate: float = 0.0
    injection_phase: int | None = None
    detector: DetectorParams = field(default_factory=DetectorParams)
    blank: BlankParams = field(default_factory=BlankParams)
    clock: ClockParams = field(default_factory=ClockParams)
    n_target_bits: int = DESK_BITS
    seed: int = 0
    stream: str = "C"
    k_max: int = 6
    grid: tuple[float, ...] = ()

    def __post_init__(self):
        if self.f_d0 < 0 or self.f_d1 < 0 or self.injection_rate < 0:
            raise ValueError("rates must be non-negative")
        if self.n_target_bits < 1:
            raise ValueError("n_target_bits must be at least 1")
        if self.stream not in STREAMS:
            raise ValueError(f"stream must be one of {STREAMS}")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")

    @property
    def points(self) -> tuple[float, ...]:
        return self.grid or DEFAULT_GRIDS[self.mode]

    def sim_config(self, seed: int | None = None, **overrides) -> SimConfig:
        base = dict(
            f_d0=self.f_d0, f_d1=self.f_d1, detector=self.detector, blank=self.blank, clock=self.clock,
            injection_rate=self.injection_rate, injection_phase=self.injection_phase,
            seed=self.seed if seed is None else seed,
        )
        base.update(overrides)
        return SimConfig(**base)

    def to_values(self) -> dict[str, Any]:
        """Flat key/value form; the manifest written beside every run."""
        d, b, c = self.detector, self.blank, self.clock
        return {
            "scenario": self.mode.value,
            "version": __version__,
            "seed": self.seed,
            "bits": self.n_target_bits,
            "stream": self.stream,
            "k_max": self.k_max,
            "f_d0": self.f_d0,
            "f_d1": self.f_d1,
            "injection_rate": self.injection_rate,
            "injection_phase": self.injection_phase,
            "blank_window": b.blank_window,
            "retrigger": b.retrigger,
            "clock_period": c.clock_period,
            "clock_mode": c.mode,
            "dead_time": d.dead_time,
            "afterpulse_prob": d.afterpulse_prob,
            "afterpulse_mean_delay": d.afterpulse_mean_delay,
            "efficiency": d.efficiency,
            "injection_detect_prob": d.injection_detect_prob,
            "grid": tuple(self.points),
        }

    @classmethod
    def from_values(cls, values: dict[str, Any], mode: Mode | None = None) -> ScenarioSpec:
        values = dict(values)
        if mode is None:
            try:
                mode = Mode(values.get("scenario", Mode.NOMINAL.value))
            except ValueError:
                raise ConfigError("scenario", f"unknown scenario {values['scenario']!r}") from None
        detector, blank, clock = build_params(values)
        bits = values.get("bits")
        if bits is None:
            bits = FULL_BITS if values.get("full") else DESK_BITS
        kwargs = dict(
            mode=mode, detector=detector, blank=blank, clock=clock, n_target_bits=bits,
            grid=tuple(values.get("grid", ())),
        )
        for key in ("f_d0", "f_d1", "injection_rate", "injection_phase", "seed", "stream", "k_max"):
            if key in values:
                kwargs[key] = values[key]
        try:
            return cls(**kwargs)
        except ValueError as e:
            msg = str(e)
            key = next((k for k in ("n_target_bits", "stream", "k_max", "rates") if k in msg), "scenario")
            raise ConfigError({"n_target_bits": "bits", "rates": "f_d0"}.get(key, key), msg) from None


@dataclass
class PointReport:
    """Measured metrics of one scenario point with predictions alongside.

    ``predicted`` holds the pair-XOR forms applied to the measured S metrics
    (``b_Y``, ``a_Y``), the XOR forms applied to measured T and predicted Y
    (``b_C``, ``a_C``), and the no-blanking afterpulse-minus-dead-time value
    ``a_S_net``. ``alarm`` is ``"low"``/``"high"`` when f_G and f_B both lie
    below/above the nominal values (monitoring only).
    """

    index: int
    x: float
    config: SimConfig
    metrics: dict[str, stats.MetricsReport | None]
    cross: stats.CrossCorrReport | None
    f_G: float
    sigma_f_G: float
    f_B: float
    sigma_f_B: float
    f_accepted: float
    f_detected: float
    f_d0: float
    f_d1: float
    n_detected: int
    n_accepted: int
    n_blanked: int
    tie_count: int
    duration: float
    origin_counts: dict = field(default_factory=dict)
    predicted: dict[str, float] = field(default_factory=dict)
    curve: str = ""
    alarm: str = ""

    def m(self, stream: str) -> stats.MetricsReport:
        rep = self.metrics.get(stream)
        if rep is None:
            raise ValueError(f"stream {stream} has no metrics at point {self.index} (too short or constant)")
        return rep


@dataclass
class ScenarioReport:
    mode: Mode
    spec: ScenarioSpec
    points: list[PointReport]
    crossings: list[float] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    nominal: PointReport | None = None

    @property
    def x_label(self) -> str:
        return X_LABELS[self.mode]

    def curve(self, name: str) -> list[PointReport]:
        return [p for p in self.points if p.curve == name]


def point_seed(seed: int, index: int) -> int:
    """Seed of sweep point ``index``, a pure function of the scenario seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def _safe_measure(stream, k_max: int, label: str) -> stats.MetricsReport | None:
    try:
        return stats.measure(stream, k_max, label)
    except ValueError:
        return None


def _predictions(metrics, config: SimConfig) -> dict[str, float]:
    out: dict[str, float] = {}
    f_det = (config.f_d0 + config.f_d1) / 2
    d = config.detector
    out["a_S_net"] = d.afterpulse_prob - d.dead_time / PS_PER_S * f_det
    s, t = metrics.get("S"), metrics.get("T")
    if s is None:
        return out
    try:
        y = propagate_pairxor(MarkovBitModel(s.bias, s.a(1)))
    except ValueError:
        return out
    out["b_Y"], out["a_Y"] = y.model.b, y.model.a
    if t is not None:
        try:
            c = propagate_xor(MarkovBitModel(t.bias, t.a(1)), y.model)
        except ValueError:
            return out
        out["b_C"], out["a_C"] = c.model.b, c.model.a
    return out


def _max_duration(n_bits: int) -> float:
    # generous cap so vanishing rates cannot stall a run
    return max(1e-3, n_bits / 1e5)


def run_point(
    config: SimConfig,
    n_bits: int,
    stream: str = "C",
    k_max: int = 6,
    index: int = 0,
    x: float = 0.0,
    curve: str = "",
    on_block: Callable[[DetectionStream, DetectionStream], None] | None = None,
) -> PointReport:
    """Simulate one configuration and measure every stream."""
    r = simulate(config, n_bits=n_bits, stream=stream, duration=_max_duration(n_bits), on_block=on_block)
    metrics = {name: _safe_measure(getattr(r, name), k_max, name) for name in STREAMS}
    try:
        cross = stats.crosscorr(r.T, r.y_paired, k_max)
    except ValueError:
        cross = None
    dur = r.duration
    per_s = (lambda n: n / dur) if dur > 0 else (lambda n: 0.0)
    n_c = len(r.C)
    return PointReport(
        index=index, x=x, config=config, metrics=metrics, cross=cross,
        f_G=per_s(n_c), sigma_f_G=per_s(math.sqrt(n_c)),
        f_B=per_s(r.n_blanked), sigma_f_B=per_s(math.sqrt(r.n_blanked)),
        f_accepted=per_s(r.n_accepted), f_detected=per_s(r.n_detected),
        f_d0=per_s(r.n_detected_d0), f_d1=per_s(r.n_detected_d1),
        n_detected=r.n_detected, n_accepted=r.n_accepted, n_blanked=r.n_blanked, tie_count=r.tie_count,
        duration=dur, origin_counts={Origin(k).name.lower(): v for k, v in r.origin_counts.items()},
        predicted=_predictions(metrics, config), curve=curve,
    )


def _job(args) -> PointReport:
    return run_point(*args)


def _run_jobs(jobs_args: list[tuple], jobs: int) -> list[PointReport]:
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(min(jobs, len(jobs_args))) as pool:
            return list(pool.map(_job, jobs_args))
    return [_job(a) for a in jobs_args]


def find_crossings(xs, ys) -> list[float]:
    """Sign changes of ``ys`` located by linear interpolation between neighbours."""
    out = []
    for (x0, y0), (x1, y1) in zip(zip(xs, ys), zip(xs[1:], ys[1:])):
        if y0 == 0:
            out.append(float(x0))
        elif y0 * y1 < 0:
            out.append(float(x0 + (x1 - x0) * (-y0) / (y1 - y0)))
    if len(ys) and ys[-1] == 0:
        out.append(float(xs[-1]))
    return out


def _require(spec: ScenarioSpec, mode: Mode) -> None:
    if spec.mode is not mode:
        raise ValueError(f"scenario spec has mode {spec.mode.value}, expected {mode.value}")


def run_nominal(
    spec: ScenarioSpec, on_block: Callable[[DetectionStream, DetectionStream], None] | None = None
) -> ScenarioReport:
    """One point at the configured rates, with predictions from measured S and T."""
    _require(spec, Mode.NOMINAL)
    p = run_point(spec.sim_config(), spec.n_target_bits, spec.stream, spec.k_max, on_block=on_block)
    return ScenarioReport(Mode.NOMINAL, spec, [p])


def _sweep(spec: ScenarioSpec, jobs: int, make: Callable[[float], dict], curve: str = "", offset: int = 0):
    args = []
    for i, x in enumerate(spec.points):
        cfg = spec.sim_config(point_seed(spec.seed, offset + i), **make(x))
        args.append((cfg, spec.n_target_bits, spec.stream, spec.k_max, offset + i, x, curve))
    return _run_jobs(args, jobs)


def sweep_rate(spec: ScenarioSpec, jobs: int = 1) -> ScenarioReport:
    """a_S(1) against the per-detector detected rate (both detectors equal)."""
    _require(spec, Mode.RATE_SWEEP)
    points = _sweep(spec, jobs, lambda x: {"f_d0": x, "f_d1": x})
    rep = ScenarioReport(Mode.RATE_SWEEP, spec, points)
    xs = [p.x for p in points if p.metrics["S"] is not None]
    ys = [p.m("S").a(1) for p in points if p.metrics["S"] is not None]
    rep.crossings = find_crossings(xs, ys)
    if not rep.crossings:
        rep.notes.append("a_S(1) does not change sign on this grid; no crossover bracketed")
    elif len(rep.crossings) > 1:
        rep.notes.append(f"{len(rep.crossings)} sign changes of a_S(1) on this grid")
    return rep


def sweep_blank(spec: ScenarioSpec, jobs: int = 1) -> ScenarioReport:
    """Metrics against the blanking window (grid values in ps)."""
    _require(spec, Mode.BLANK_SWEEP)
    points = _sweep(spec, jobs, lambda x: {"blank": dataclasses.replace(spec.blank, blank_window=int(round(x)))})
    rep = ScenarioReport(Mode.BLANK_SWEEP, spec, points)
    xs = [p.x for p in points if p.metrics["S"] is not None]
    rep.crossings = find_crossings(xs, [p.m("S").a(1) for p in points if p.metrics["S"] is not None])
    return rep


def scenario_failure(spec: ScenarioSpec, jobs: int = 1) -> ScenarioReport:
    """D0 at its configured rate while D1 is swept down towards zero."""
    _require(spec, Mode.DETECTOR_FAILURE)
    return ScenarioReport(Mode.DETECTOR_FAILURE, spec, _sweep(spec, jobs, lambda x: {"f_d1": x}))


def scenario_injection(spec: ScenarioSpec, jobs: int = 1) -> ScenarioReport:
    """Photon rates fixed, periodic injection swept."""
    _require(spec, Mode.INJECTION_ATTACK)
    return ScenarioReport(Mode.INJECTION_ATTACK, spec, _sweep(spec, jobs, lambda x: {"injection_rate": x}))


def _alarm(p: PointReport, ref: PointReport) -> str:
    sg = math.hypot(p.sigma_f_G, ref.sigma_f_G)
    sb = math.hypot(p.sigma_f_B, ref.sigma_f_B)
    if p.f_G < ref.f_G - ALARM_Z * sg and p.f_B < ref.f_B - ALARM_Z * sb:
        return "low"
    if p.f_G > ref.f_G + ALARM_Z * sg and p.f_B > ref.f_B + ALARM_Z * sb:
        return "high"
    return ""


MONITOR_CURVES = ("both", "d0", "inject")


def scenario_monitoring(spec: ScenarioSpec, jobs: int = 1) -> ScenarioReport:
    """f_G and f_B for (i) both rates lowered, (ii) only D0 lowered, (iii) injection.

    Each point is flagged against a nominal reference run at the configured
    rates: ``low`` when both observables fall below it, ``high`` when both rise.
    """
    _require(spec, Mode.MONITORING)
    rates = spec.points
    inject = DEFAULT_GRIDS[Mode.INJECTION_ATTACK]
    args = [(spec.sim_config(point_seed(spec.seed, 0)), spec.n_target_bits, spec.stream, spec.k_max, 0, 0.0, "nominal")]
    i = 1
    for curve, xs, make in (
        ("both", rates, lambda x: {"f_d0": x, "f_d1": x}),
        ("d0", rates, lambda x: {"f_d0": x}),
        ("inject", inject, lambda x: {"injection_rate": x}),
    ):
        for x in xs:
            cfg = spec.sim_config(point_seed(spec.seed, i), **make(x))
            args.append((cfg, spec.n_target_bits, spec.stream, spec.k_max, i, x, curve))
            i += 1
    results = _run_jobs(args, jobs)
    nominal, points = results[0], results[1:]
    for p in points:
        p.alarm = _alarm(p, nominal)
    return ScenarioReport(Mode.MONITORING, spec, points, nominal=nominal)


RUNNERS: dict[Mode, Callable[..., ScenarioReport]] = {
    Mode.RATE_SWEEP: sweep_rate,
    Mode.BLANK_SWEEP: sweep_blank,
    Mode.DETECTOR_FAILURE: scenario_failure,
    Mode.INJECTION_ATTACK: scenario_injection,
    Mode.MONITORING: scenario_monitoring,
}


def run_scenario(spec: ScenarioSpec, jobs: int = 1, **kwargs) -> ScenarioReport:
    if spec.mode is Mode.NOMINAL:
        return run_nominal(spec, **kwargs)
    return RUNNERS[spec.mode](spec, jobs)


# ---- output ---------------------------------------------------------------

POINT_HEADER = (
    ["point", "curve", "x", "f_d0_target", "f_d1_target", "f_inject", "blank_window_ps", "f_d0", "f_d1"]
    + [f"{c}_{s}" for s in STREAMS for c in ("N", "b", "sigma_b", "a1", "sigma_a1")]
    + ["b_Y_pred", "a_Y_pred", "b_C_pred", "a_C_pred", "a_S_net_pred", "aTY_max_z"]
    + ["f_G", "sigma_f_G", "f_B", "sigma_f_B", "f_accepted", "f_detected", "ties", "duration_s", "alarm"]
)


def _point_row(p: PointReport) -> list:
    row = [p.index, p.curve, p.x, p.config.f_d0, p.config.f_d1, p.config.injection_rate, p.config.blank.blank_window, p.f_d0, p.f_d1]
    for s in STREAMS:
        m = p.metrics.get(s)
        row += [m.n_bits, m.bias, m.sigma_b, m.a(1), m.sigma_a(1)] if m is not None else ["", "", "", "", ""]
    row += [p.predicted.get(k, "") for k in ("b_Y", "a_Y", "b_C", "a_C", "a_S_net")]
    row.append(p.cross.max_significance() if p.cross is not None else "")
    row += [p.f_G, p.sigma_f_G, p.f_B, p.sigma_f_B, p.f_accepted, p.f_detected, p.tie_count, p.duration, p.alarm]
    return row


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _all_points(report: ScenarioReport) -> list[PointReport]:
    return ([report.nominal] if report.nominal is not None else []) + report.points


def points_csv(report: ScenarioReport) -> str:
    return _csv_text(POINT_HEADER, [_point_row(p) for p in _all_points(report)])


def metrics_csv(report: ScenarioReport) -> str:
    rows = []
    for p in _all_points(report):
        for s in STREAMS:
            m = p.metrics.get(s)
            if m is not None:
                rows += [[p.index, p.curve, p.x, *r] for r in m.csv_rows()]
    return _csv_text(["point", "curve", "x", *stats.CSV_HEADER], rows)


def crosscorr_csv(report: ScenarioReport) -> str:
    rows = []
    for p in _all_points(report):
        if p.cross is not None:
            rows += [[p.index, p.curve, p.x, k, v, s] for k, v, s in p.cross.lags]
    return _csv_text(["point", "curve", "x", "k", "a_TY", "sigma"], rows)


def monitor_csv(report: ScenarioReport, curve: str) -> str:
    rows = [[p.x, p.f_G, p.sigma_f_G, p.f_B, p.sigma_f_B, p.alarm] for p in report.curve(curve)]
    return _csv_text(["x", "f_G", "sigma_f_G", "f_B", "sigma_f_B", "alarm"], rows)


def _fmt(v: float, s: float) -> str:
    return f"{v:+.6f} +- {s:.6f}"


def report_text(report: ScenarioReport) -> str:
    lines = [f"scenario: {report.mode.value}  seed: {report.spec.seed}  bits/point: {report.spec.n_target_bits}"]
    if report.nominal is not None:
        n = report.nominal
        lines.append(f"nominal reference: f_G = {n.f_G / 1e6:.4f} Mbit/s, f_B = {n.f_B / 1e6:.4f} M/s")
    for p in report.points:
        head = f"[{p.index}] {p.curve + ' ' if p.curve else ''}{report.x_label} = {p.x:g}"
        lines.append(head)
        lines.append(
            f"    f_D0 = {p.f_d0 / 1e6:.4f} Mcps  f_D1 = {p.f_d1 / 1e6:.4f} Mcps  "
            f"f_G = {p.f_G / 1e6:.4f} Mbit/s  f_B = {p.f_B / 1e6:.4f} M/s" + (f"  ALARM {p.alarm}" if p.alarm else "")
        )
        for s in STREAMS:
            m = p.metrics.get(s)
            if m is None:
                lines.append(f"    {s}: n/a")
                continue
            pred = ""
            if f"b_{s}" in p.predicted:
                pred = f"   predicted b = {p.predicted[f'b_{s}']:+.6f}, a1 = {p.predicted[f'a_{s}']:+.6f}"
            lines.append(f"    {s}: N = {m.n_bits:<10d} b = {_fmt(m.bias, m.sigma_b)}  a1 = {_fmt(m.a(1), m.sigma_a(1))}{pred}")
        if p.cross is not None:
            lines.append(f"    max |a_TY(k)| / sigma = {p.cross.max_significance():.2f}")
    if report.crossings:
        lines.append("a_S(1) sign change at " + ", ".join(f"{c:g}" for c in report.crossings))
    lines += [f"note: {n}" for n in report.notes]
    return "\n".join(lines) + "\n"


def write_outputs(report: ScenarioReport, out_dir, extra: dict[str, str] | None = None) -> list[Path]:
    """Write the CSVs, text report and manifest of ``report`` into ``out_dir``."""
    out = Path(out_dir)
    files = {
        "manifest.txt": dump_config(report.spec.to_values()),
        "points.csv": points_csv(report),
        "metrics.csv": metrics_csv(report),
        "crosscorr.csv": crosscorr_csv(report),
        "report.txt": report_text(report),
    }
    if report.mode is Mode.MONITORING:
        for c in MONITOR_CURVES:
            files[f"monitor_{c}.csv"] = monitor_csv(report, c)
    files.update(extra or {})
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in files.items():
            (out / name).write_text(text)
            written.append(out / name)
    except OSError as e:
        raise OSError(f"cannot write outputs to {out}: {e.strerror or e}") from e
    return written


class EventDump:
    """``on_block`` callback writing detections as ``time_ps,channel,kind`` CSV."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = self.path.open("w")
        self._fh.write("time_ps,channel,kind\n")
        self._names = np.array([o.name.lower() for o in Origin])

    def __call__(self, d0: DetectionStream, d1: DetectionStream) -> None:
        m = merge_channels(d0, d1)
        kinds = self._names[m.origin]
        for t, c, k in zip(m.times.tolist(), m.channel.tolist(), kinds.tolist()):
            self._fh.write(f"{t},D{c},{k}\n")

    def close(self) -> None:
        self._fh.close()
