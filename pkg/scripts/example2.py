"""Radial quadratic field on [-2,2]^2: per-alpha synthesis diagnostics.

Runs the refinement loop for each alpha on a few grid sizes and prints the
boundary slack trajectory, then checks the initial/unsafe boxes if any
alpha certifies.

    python3 scripts/example2.py --grids 4,8 --rounds 6
"""
import argparse
import warnings

import numpy as np

from pwabarrier import fixtures as fx
from pwabarrier.barrier import max_combine, LeakyAlpha
from pwabarrier.dynamics import relu_to_pwa
from pwabarrier.synthesis import SynthesisConfig, synthesize


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grids", default="4,8")
    ap.add_argument("--rounds", type=int, default=6)
    ap.add_argument("--relu", action="store_true")
    args = ap.parse_args()
    warnings.simplefilter("ignore")

    systems = [("relu20", relu_to_pwa(fx.load_relu("example2"), fx.EXAMPLE2_DOMAIN))] if args.relu else \
        [(f"grid{g}", fx.example2_system(int(g))) for g in args.grids.split(",")]
    for name, d in systems:
        good = []
        for a in fx.EXAMPLE2_ALPHAS:
            r = synthesize(d, SynthesisConfig(alpha=a, max_refine_rounds=args.rounds))
            trail = " ".join(f"{h['tau_b_sum']:.3g}" for h in r.history)
            print(f"{name} alpha={a}: certified={r.certified} cells={len(r.partition_used)} tau_b: {trail}")
            if r.certified:
                good.append(r)
        if good:
            u = max_combine([r.barrier for r in good],
                            LeakyAlpha(min(r.alpha for r in good), max(r.alpha for r in good)))
            print("  init vertices h:", np.round(u(fx.INIT_SET.vertices), 4))
            print("  unsafe vertices h:", np.round(u(fx.UNSAFE_SET.vertices), 4))


if __name__ == "__main__":
    main()
