"""Export a combined stream, then run the NIST subset on it and on a fair coin.

    python3 demos/05_nist_subset.py --sequences 5
"""

import argparse
import tempfile
from pathlib import Path

import numpy as np

from combo_rng import sts
from combo_rng.simulate import SimConfig, simulate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sequences", type=int, default=5, help="sequences of 1e6 bits")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    n = args.sequences * sts.SEQ_LEN

    c = simulate(SimConfig(seed=args.seed), n_bits=n, stream="C").C
    with tempfile.TemporaryDirectory() as tmp:
        path = sts.export_bits(c, Path(tmp) / "C.bin", "packed")
        print(f"wrote {len(c)} C bits to a packed file ({path.stat().st_size} bytes)")
        c = sts.import_bits(path, "packed")

    print("\nSimulated C stream:")
    print(sts.run_suite(c).to_text())
    fair = np.random.default_rng(args.seed).integers(0, 2, n, dtype=np.uint8)
    print("Fair-coin reference:")
    print(sts.run_suite(fair).to_text())


if __name__ == "__main__":
    main()
