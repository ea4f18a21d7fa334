"""Detector failure, injection attack, and the two health observables.

    python3 demos/03_failure_and_attack.py --bits 500000
"""

import argparse

from combo_rng.harness import Mode, ScenarioSpec, run_scenario


def _row(p) -> str:
    c, t, y = p.metrics["C"], p.metrics["T"], p.metrics["Y"]
    cs = f"b_C {c.bias:+.5f} a_C {c.a(1):+.5f}" if c else "C n/a"
    ts = f"a_T {t.a(1):+.5f}" if t else "T n/a"
    ys = f"b_Y {y.bias:+.5f}" if y else "Y n/a"
    return f"{cs}   {ts}   {ys}"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bits", type=int, default=500_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    print("D1 fading out while D0 stays at 10 Mcps: with D1 dead, S is constant, Y is all")
    print("zeros and C collapses onto T.")
    for p in run_scenario(ScenarioSpec(Mode.DETECTOR_FAILURE, n_target_bits=args.bits, seed=args.seed)).points:
        print(f"   f_D1 = {p.x / 1e6:4.1f} Mcps   {_row(p)}")
    print()

    print("Periodic pulses hitting both detectors at once:")
    for p in run_scenario(ScenarioSpec(Mode.INJECTION_ATTACK, n_target_bits=args.bits, seed=args.seed)).points:
        print(f"   f_inj = {p.x / 1e6:3.0f} MHz   {_row(p)}")
    print()

    print("Monitoring: generation rate f_G and blanked-event rate f_B against nominal")
    rep = run_scenario(ScenarioSpec(Mode.MONITORING, n_target_bits=args.bits, seed=args.seed))
    n = rep.nominal
    print(f"   nominal: f_G = {n.f_G / 1e6:.3f} Mbit/s, f_B = {n.f_B / 1e6:.3f} M/s")
    labels = {"both": "both detectors at", "d0": "D0 alone at", "inject": "injection at"}
    for curve in ("both", "d0", "inject"):
        for p in rep.curve(curve):
            flag = f"  -> alarm {p.alarm}" if p.alarm else ""
            print(f"   {labels[curve]:>18} {p.x / 1e6:4.1f} M: f_G = {p.f_G / 1e6:.3f}, f_B = {p.f_B / 1e6:.3f}{flag}")


if __name__ == "__main__":
    main()
