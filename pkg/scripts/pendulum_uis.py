"""Union of invariant sets for the saturated inverted pendulum.

Writes the merged barrier, the report and plot data (superlevel polygons
for the merged set and each member) to --out.

    python3 scripts/pendulum_uis.py --grid 16 --out runs/pendulum
"""
import argparse
import time
from pathlib import Path

from pwabarrier import fixtures as fx
from pwabarrier import io as pio
from pwabarrier.barrier import superlevel_set
from pwabarrier.dynamics import relu_to_pwa
from pwabarrier.synthesis import SynthesisConfig, uis


def polygons(b):
    sl = superlevel_set(b)
    return {"area": sl.area, "polygons": [p.ordered_vertices() for p in sl.polytopes]}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, default=16)
    ap.add_argument("--relu", action="store_true", help="use the 8-neuron network instead of interpolation")
    ap.add_argument("--alphas", default="0.025,0.05,0.06")
    ap.add_argument("--out", default="runs/pendulum")
    args = ap.parse_args()

    if args.relu:
        d = relu_to_pwa(fx.load_relu("pendulum"), fx.PENDULUM_DOMAIN)
    else:
        d = fx.pendulum_system(args.grid)
    alphas = [float(a) for a in args.alphas.split(",")]
    t0 = time.perf_counter()
    union, rep, results = uis(d, alphas, SynthesisConfig(max_refine_rounds=6))
    print(f"{time.perf_counter() - t0:.1f}s")
    for r in results:
        print(f"alpha={r.alpha:<6g} certified={r.certified!s:5} cells={len(r.partition_used):5d} "
              f"area={rep.member_areas.get(str(r.alpha), float('nan')):.3f}")
    print(f"merged area={rep.merged_area:.3f} strict_gain={rep.strict_gain} "
          f"leaky verify={rep.verification['passed']} containment={rep.containment['passed']}")

    out = Path(args.out)
    pio.write_json(out / "report.json", rep.to_dict())
    pio.write_json(out / "union_barrier.json", pio.barrier_to_dict(union.merged, union.alpha))
    pio.write_json(out / "plot.json", {
        "merged": polygons(union.merged),
        "members": {str(r.alpha): polygons(r.barrier) for r in results if r.certified},
    })


if __name__ == "__main__":
    main()
