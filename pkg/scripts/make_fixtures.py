"""Regenerate the shipped ReLU weight files under src/pwabarrier/data/.

    python3 scripts/make_fixtures.py --seed 0
"""
import argparse
from pathlib import Path

import numpy as np

from pwabarrier import fixtures as fx
from pwabarrier import io as pio

DATA = Path(__file__).resolve().parents[1] / "src" / "pwabarrier" / "data"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for name, (fname, field, dom, m) in fx.WEIGHT_FILES.items():
        net = fx.fit_relu(field, dom, m, seed=args.seed)
        X = np.random.default_rng(args.seed + 1).uniform(*dom.bbox, size=(10_000, dom.n))
        rms = np.sqrt(np.mean((net(X) - field(X)) ** 2))
        pio.write_json(DATA / fname, fx.relu_to_json(net))
        print(f"{fname}: {m} neurons, rms fit error {rms:.4f}")


if __name__ == "__main__":
    main()
