"""Bias and correlation through XOR, checked on synthetic Markov streams.

    python3 demos/04_xor_propagation.py --bits 10000000
"""

import argparse

from combo_rng import stats
from combo_rng.extract import combine, derive_y
from combo_rng.predict import (
    MarkovBitModel,
    gen_markov_bits,
    propagate_pairxor,
    propagate_xor,
    required_sample_size,
)


def _show(name, measured, model):
    print(f"   {name}: measured b = {measured.bias:+.6f} +- {measured.sigma_b:.6f}, a1 = {measured.a(1):+.6f} +- {measured.sigma_a(1):.6f}")
    print(f"      predicted b = {model.b:+.6f}, a1 = {model.a:+.6f}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bits", type=int, default=10_000_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    s_model = MarkovBitModel(0.01, 0.02)
    print(f"Spatial-like input {s_model}; pair-XOR halves the length")
    s = gen_markov_bits(s_model, args.bits, args.seed)
    y_model = propagate_pairxor(s_model).model
    _show("Y", stats.measure(derive_y(s), 1), y_model)

    t_model = MarkovBitModel(0.05, 0.1)
    print(f"\nXOR of an independent temporal-like stream {t_model} with Y")
    t = gen_markov_bits(t_model, len(s) // 2, args.seed + 1)
    c_model = propagate_xor(t_model, y_model).model
    _show("C", stats.measure(combine(t, derive_y(s)), 1), c_model)

    print("\nBits needed before the residual imperfection shows at 1.96 sigma:")
    for m in (s_model, y_model, c_model, MarkovBitModel(7.1e-8, 3.7e-12)):
        print(f"   b = {m.b:+.3e}, a = {m.a:+.3e}: {required_sample_size(m):.3g} bits")


if __name__ == "__main__":
    main()
