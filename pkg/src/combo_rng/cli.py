"""Command-line interface.

Every simulating subcommand writes its CSVs, a text report and a
``manifest.txt`` into ``--out``; the manifest is a config file that
regenerates the run when passed back through ``--config``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, predict, sts
from .config import ConfigError, dump_config, load_config, parse_value
from .harness import (
    EventDump,
    Mode,
    ScenarioSpec,
    points_csv,
    report_text,
    run_scenario,
    write_outputs,
)
from .simulate import simulate
from .stats import CSV_HEADER, crosscorr, measure
from .units import PS_PER_S, parse_duration, parse_rate

log = logging.getLogger("combo_rng")

SCENARIO_COMMANDS = {
    "simulate": Mode.NOMINAL,
    "sweep-rate": Mode.RATE_SWEEP,
    "sweep-blank": Mode.BLANK_SWEEP,
    "scenario-failure": Mode.DETECTOR_FAILURE,
    "scenario-inject": Mode.INJECTION_ATTACK,
    "monitor": Mode.MONITORING,
}

# CLI flag -> config key
PHYSICS_FLAGS = {
    "rate": None,  # sets both f_d0 and f_d1
    "rate_d0": "f_d0",
    "rate_d1": "f_d1",
    "inject": "injection_rate",
    "inject_phase": "injection_phase",
    "blank_window": "blank_window",
    "retrigger": "retrigger",
    "clock_period": "clock_period",
    "clock_mode": "clock_mode",
    "dead_time": "dead_time",
    "pa": "afterpulse_prob",
    "ap_delay": "afterpulse_mean_delay",
    "efficiency": "efficiency",
    "grid": "grid",
    "stream": "stream",
    "k_max": "k_max",
}


class CliError(Exception):
    pass


def _count(text: str) -> int:
    """Integer argument that also accepts exact scientific notation such as 1e6."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid count: {text!r}") from None
    if not v.is_integer():
        raise argparse.ArgumentTypeError(f"count must be a whole number: {text!r}")
    return int(v)


def _global_parser() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", metavar="PATH", help="flat key = value config file (a manifest works too)")
    g.add_argument("--seed", type=int, help="64-bit seed")
    g.add_argument("--out", metavar="DIR", default="results", help="output directory (default: results)")
    g.add_argument("--bits", type=_count, help="target bits per scenario point (default 1e7)")
    g.add_argument("--format", choices=("csv", "report"), default="report", help="stdout format")
    g.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    g.add_argument("--full", action="store_true", help="long runs at 1e9 bits per point")
    g.add_argument("-v", "--verbose", action="store_true")
    return g


def _physics_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--rate", help="detected rate of both detectors, e.g. 10Mcps")
    p.add_argument("--rate-d0", help="detected rate of D0")
    p.add_argument("--rate-d1", help="detected rate of D1")
    p.add_argument("--inject", help="injection rate, e.g. 5MHz")
    p.add_argument("--inject-phase", help="injection phase, e.g. 10ns")
    p.add_argument("--blank-window", help="blanking window, e.g. 17.6ns")
    p.add_argument("--retrigger", help="any-event or accepted-only")
    p.add_argument("--clock-period", help="T1T2 clock period, e.g. 1ns")
    p.add_argument("--clock-mode", help="restartable or free-running")
    p.add_argument("--dead-time", help="detector dead time, e.g. 24ns")
    p.add_argument("--pa", help="afterpulse probability")
    p.add_argument("--ap-delay", help="mean afterpulse delay past the dead time")
    p.add_argument("--efficiency", help="photon detection efficiency")
    p.add_argument("--grid", help="comma-separated sweep values (rates or durations)")
    p.add_argument("--stream", help="stream whose length stops each run (S, Y, T or C)")
    p.add_argument("--k-max", help="largest autocorrelation lag")
    return p


def build_parser() -> argparse.ArgumentParser:
    glob, phys = _global_parser(), _physics_parser()
    parser = argparse.ArgumentParser(prog="combo-rng", description="Photonic QRNG simulator and randomness toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    helps = {
        "simulate": "nominal run with S/Y/T/C reports",
        "sweep-rate": "a_S(1) against detected rate",
        "sweep-blank": "metrics against the blanking window",
        "scenario-failure": "D1 rate swept towards zero",
        "scenario-inject": "periodic injection attack sweep",
        "monitor": "f_G and f_B health observables for failure and attack",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, parents=[glob, phys], help=text, description=text)
        if name == "simulate":
            sp.add_argument("--dump-events", metavar="CSV", help="also write every detection as time_ps,channel,kind")

    pr = sub.add_parser("predict", parents=[glob], help="analytic predictions from parameters")
    pr.add_argument("--pa", type=float, default=None, help="afterpulse probability")
    pr.add_argument("--dead-time", help="dead time, e.g. 24ns")
    pr.add_argument("--rate", help="detected rate (1/tau), e.g. 1Mcps")
    pr.add_argument("--tau", help="mean detection period, e.g. 1000ns")
    pr.add_argument("--b", type=float, help="bias of the input stream (S, or T with --by/--ay)")
    pr.add_argument("--a", type=float, help="lag-1 autocorrelation of the input stream")
    pr.add_argument("--by", type=float, help="bias of the second XOR input")
    pr.add_argument("--ay", type=float, help="autocorrelation of the second XOR input")
    pr.add_argument("--z", type=float, default=1.96, help="significance for the required sample size")

    st = sub.add_parser("stats", parents=[glob], help="bias and autocorrelation of a bit file")
    st.add_argument("file")
    st.add_argument("--fmt", choices=("ascii", "packed"), default="ascii", help="bit file format")
    st.add_argument("--k-max", type=int, default=6)
    st.add_argument("--label", default="")
    st.add_argument("--cross", metavar="FILE", help="second bit file for a cross-correlation")

    te = sub.add_parser("test", parents=[glob], help="NIST subset on a bit file")
    te.add_argument("file")
    te.add_argument("--fmt", choices=("ascii", "packed"), default="ascii")
    te.add_argument("--seq-len", type=_count, default=sts.SEQ_LEN)
    te.add_argument("--alpha", type=float, default=sts.ALPHA)

    ex = sub.add_parser("export", parents=[glob, phys], help="simulate and write a bit file")
    ex.add_argument("--fmt", choices=("ascii", "packed"), default="packed")
    ex.add_argument("--which", default="C", choices=("S", "Y", "T", "C"), help="stream to export")
    return parser


def _resolve_values(args) -> dict:
    values = load_config(args.config) if args.config else {}
    for flag, key in PHYSICS_FLAGS.items():
        text = getattr(args, flag, None)
        if text is None:
            continue
        if flag == "rate":
            values["f_d0"] = values["f_d1"] = parse_value("f_d0", text)
        else:
            values[key] = parse_value(key, text)
    if args.seed is not None:
        values["seed"] = args.seed
    if args.bits is not None:
        values["bits"] = args.bits
    elif args.full:
        values["bits"] = 10**9
    values.pop("version", None)
    return values


def _scenario(args) -> int:
    mode = SCENARIO_COMMANDS[args.command]
    values = _resolve_values(args)
    if args.bits is not None and args.bits < 1:
        raise CliError(f"--bits must be at least 1, got {args.bits}")
    spec = ScenarioSpec.from_values(values, mode)
    dump = None
    kwargs = {}
    if getattr(args, "dump_events", None):
        dump = EventDump(args.dump_events)
        kwargs["on_block"] = dump
    try:
        report = run_scenario(spec, args.jobs, **kwargs)
    finally:
        if dump is not None:
            dump.close()
    write_outputs(report, args.out)
    sys.stdout.write(points_csv(report) if args.format == "csv" else report_text(report))
    return 0


def _predict(args) -> int:
    lines = []
    rows = []

    def emit(key, value, note=""):
        rows.append([key, value])
        lines.append(f"{key} = {value:.6g}" + (f"  ({note})" if note else ""))

    tau_d = parse_duration(args.dead_time) if args.dead_time else None
    tau = None
    if args.tau:
        tau = parse_duration(args.tau)
    elif args.rate:
        r = parse_rate(args.rate)
        if not r > 0:
            raise CliError("--rate must be positive")
        tau = PS_PER_S / r
    if args.pa is not None and tau_d is not None:
        f0 = predict.predict_f0(args.pa, tau_d)
        emit("f_0", f0, f"{f0 / 1e6:.3g} Mcps")
    if tau_d is not None and tau is not None:
        dt = predict.predict_deadtime_autocorr(tau_d, tau)
        emit("a_deadtime", dt.exact, "exp(-tau_d/tau) - 1")
        emit("a_deadtime_approx", dt.approx, "-tau_d/tau")
        emit("a_net", predict.predict_net_autocorr(predict.DeadTimeModel(tau_d, tau, args.pa or 0.0)), "p_a - tau_d/tau")
    if (args.b is None) != (args.a is None):
        raise CliError("--b and --a go together")
    if args.b is not None:
        m = predict.MarkovBitModel(args.b, args.a)
        if args.by is not None or args.ay is not None:
            y = predict.MarkovBitModel(args.by or 0.0, args.ay or 0.0)
            c = predict.propagate_xor(m, y)
            emit("b_C", c.model.b)
            emit("a_C", c.model.a)
            emit("a_C_approx", c.approx[1])
            out = c.model
        else:
            p = predict.propagate_pairxor(m)
            emit("b_Y", p.model.b)
            emit("a_Y", p.model.a)
            emit("b_Y_approx", p.approx[0])
            emit("a_Y_approx", p.approx[1], "valid" if p.approx_valid else "outside small-imperfection regime")
            out = m
        emit("required_bits", predict.required_sample_size(out, args.z), f"z = {args.z:g}")
    if not rows:
        raise CliError("nothing to predict: give --pa with --dead-time, --dead-time with --rate/--tau, or --b/--a")
    if args.format == "csv":
        sys.stdout.write("quantity,value\n" + "".join(f"{k},{v!r}\n" for k, v in rows))
    else:
        sys.stdout.write("\n".join(lines) + "\n")
    return 0


def _stats(args) -> int:
    bits = sts.import_bits(args.file, args.fmt, args.label if args.label in ("S", "Y", "T", "C") else "")
    rep = measure(bits, args.k_max, args.label)
    cross = None
    if args.cross:
        cross = crosscorr(bits, sts.import_bits(args.cross, args.fmt), args.k_max)
    if args.format == "csv":
        sys.stdout.write(",".join(CSV_HEADER) + "\n")
        sys.stdout.write("".join(",".join(map(str, r)) + "\n" for r in rep.csv_rows()))
        if cross is not None:
            sys.stdout.write("k,a_xy,sigma\n" + "".join(f"{k},{v!r},{s!r}\n" for k, v, s in cross.lags))
    else:
        sys.stdout.write(rep.to_text())
        if cross is not None:
            sys.stdout.write("".join(f"a_xy({k}) = {v:.9g}\nsigma_xy({k}) = {s:.9g}\n" for k, v, s in cross.lags))
    return 0


def _test(args) -> int:
    bits = sts.import_bits(args.file, args.fmt)
    suite = sts.run_suite(bits, args.seq_len, args.alpha, jobs=args.jobs)
    if args.format == "csv":
        sys.stdout.write(",".join(sts.SUITE_CSV_HEADER) + "\n")
        sys.stdout.write("".join(",".join(map(str, r)) + "\n" for r in suite.csv_rows()))
    else:
        sys.stdout.write(suite.to_text())
    return 0 if suite.passed else 1


def _export(args) -> int:
    values = _resolve_values(args)
    if args.bits is not None and args.bits < 1:
        raise CliError(f"--bits must be at least 1, got {args.bits}")
    spec = ScenarioSpec.from_values(values, Mode.NOMINAL)
    result = simulate(spec.sim_config(), n_bits=spec.n_target_bits, stream=args.which)
    stream = getattr(result, args.which)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{args.which}.{'txt' if args.fmt == 'ascii' else 'bin'}"
    sts.export_bits(stream, path, args.fmt)
    manifest = dict(spec.to_values())
    (out / "manifest.txt").write_text(dump_config(manifest) + f"# exported stream {args.which}, {len(stream)} bits, {args.fmt}\n")
    sys.stdout.write(f"wrote {len(stream)} {args.which} bits to {path}\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"predict": _predict, "stats": _stats, "test": _test, "export": _export}
    try:
        if args.command in SCENARIO_COMMANDS:
            return _scenario(args)
        return handlers[args.command](args)
    except (ConfigError, CliError, ValueError, OSError) as e:
        print(f"combo-rng {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
