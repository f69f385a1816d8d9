"""Command-line entry point: ``pwabarrier <command> ...``.

Exit codes: 0 success, 2 bad input or partition mismatch, 3 not certified,
4 verification failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import fixtures as fx
from . import io as pio
from .barrier import LeakyAlpha, superlevel_set, verify
from .dynamics import relu_to_pwa, simulate
from .errors import NoCertifiedMember, PartitionMismatch, PWAError
from .geometry import Polytope
from .synthesis import SynthesisConfig, synthesize, uis

log = logging.getLogger("pwabarrier")

OK, INPUT_ERROR, UNCERTIFIED, VERIFY_FAIL = 0, 2, 3, 4


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _config(args, alpha=None):
    kw = {}
    if getattr(args, "eps", None) is not None:
        kw.update(eps1=args.eps, eps2=args.eps, eps3=args.eps)
    if getattr(args, "max_rounds", None) is not None:
        kw["max_refine_rounds"] = args.max_rounds
    if getattr(args, "tol", None) is not None:
        kw["tol_verify"] = args.tol
    if alpha is not None:
        kw["alpha"] = alpha
    return SynthesisConfig(**kw)


class _Run:
    """Collects output paths and writes the manifest next to them."""

    def __init__(self, args, inputs, config=None):
        self.t0 = time.perf_counter()
        self.man = pio.RunManifest(
            command=args.command,
            argv=list(args._argv),
            inputs={k: str(v) for k, v in inputs.items()},
            config=config or {},
            version=__version__,
        )

    def json(self, path, obj):
        pio.write_json(path, obj)
        self.man.outputs.append(str(path))

    def csv(self, path, header, rows):
        pio.write_csv(path, header, rows)
        self.man.outputs.append(str(path))

    def finish(self, manifest_path):
        self.man.elapsed_s = round(time.perf_counter() - self.t0, 3)
        self.man.write(manifest_path)


def _manifest_for(path):
    path = Path(path)
    return path.with_name(path.stem + ".manifest.json")


# -- commands ---------------------------------------------------------------


def cmd_convert(args):
    net = pio.load_weights(args.weights)
    n = net.W1.shape[1]
    if len(args.box) == 2:
        lo, hi = [args.box[0]] * n, [args.box[1]] * n
    elif len(args.box) == 2 * n:
        lo, hi = args.box[:n], args.box[n:]
    else:
        raise pio.InputError(f"--box needs 2 or {2 * n} numbers")
    dom = Polytope.box(lo, hi)
    run = _Run(args, {"weights": args.weights}, {"box": args.box, "samples": args.samples, "seed": args.seed})
    sys_ = relu_to_pwa(net, dom)
    X = np.random.default_rng(args.seed).uniform(lo, hi, size=(args.samples, n))
    disc = float(np.max(np.abs(sys_(X) - net(X))))
    print(f"regions: {len(sys_.partition)}")
    print(f"forward-pass discrepancy over {args.samples} samples: {disc:.3e}")
    obj = pio.system_to_dict(sys_)
    obj["conversion"] = {"regions": len(sys_.partition), "max_discrepancy": disc, "samples": args.samples}
    run.json(args.out, obj)
    run.finish(_manifest_for(args.out))
    return OK if disc <= args.tol_equiv else VERIFY_FAIL


def cmd_synth(args):
    d = pio.load_system(args.system)
    cfg = _config(args, args.alpha)
    run = _Run(args, {"system": args.system}, asdict(cfg))
    res = synthesize(d, cfg)
    summ = res.summary()
    print(f"alpha={cfg.alpha:g} certified={res.certified} rounds={res.rounds_used} "
          f"cells={len(res.partition_used)} tau_b={res.tau_b_sum:.3g} tau_int={res.tau_int_sum:.3g}")
    obj = pio.barrier_to_dict(res.barrier, LeakyAlpha.linear(cfg.alpha),
                              {"certified": res.certified, "synthesis": summ,
                               "verification": res.report.summary()})
    run.json(args.out, obj)
    run.finish(_manifest_for(args.out))
    return OK if res.certified else UNCERTIFIED


def _box_arg(vals, n, flag):
    if vals is None:
        return None
    if len(vals) != 2 * n:
        raise pio.InputError(f"{flag} needs {2 * n} numbers (lower corner then upper corner)")
    return Polytope.box(vals[:n], vals[n:])


def safety_check(union, init: Polytope = None, unsafe: Polytope = None, samples=1000, seed=0):
    """Initial-box vertices must lie in the merged set; unsafe-box points must not."""
    out = {}
    if init is not None:
        h = union(init.vertices)
        out["init"] = {"vertex_values": h, "passed": bool(np.all(h >= 0))}
    if unsafe is not None:
        lo, hi = unsafe.bbox
        X = np.vstack([unsafe.vertices, np.random.default_rng(seed).uniform(lo, hi, size=(samples, len(lo)))])
        h = union(X)
        out["unsafe"] = {"points": len(X), "max_value": float(h.max()), "nonnegative": int(np.sum(h >= 0)),
                         "passed": bool(np.all(h < 0))}
    return out


def cmd_uis(args):
    d = pio.load_system(args.system)
    cfg = _config(args)
    out = Path(args.out)
    run = _Run(args, {"system": args.system}, {**asdict(cfg), "alphas": args.alphas})
    try:
        union, rep, results = uis(d, args.alphas, cfg, mc_samples=args.mc_samples, grid=args.grid, seed=args.seed)
    except NoCertifiedMember as exc:
        print(f"uncertified: {exc}")
        run.json(out / "report.json", {"alphas": args.alphas, "certified": False,
                                       "members": [r.summary() for r in exc.results],
                                       "error": str(exc)})
        run.finish(out / "manifest.json")
        return UNCERTIFIED
    report = rep.to_dict()
    safety = safety_check(union, _box_arg(args.init_box, d.n, "--init-box"),
                          _box_arg(args.unsafe_box, d.n, "--unsafe-box"), seed=args.seed)
    if safety:
        report["safety"] = safety
    for r in results:
        print(f"  alpha={r.alpha:g} certified={r.certified} cells={len(r.partition_used)} rounds={r.rounds_used}")
    print(f"merged alpha=({rep.merged_alpha[0]:g}, {rep.merged_alpha[1]:g}) area={rep.merged_area:.4f} "
          f"strict_gain={rep.strict_gain} verify={'PASS' if rep.verification['passed'] else 'FAIL'} "
          f"containment={'PASS' if rep.containment['passed'] else 'FAIL'}")
    run.json(out / "union_barrier.json",
             pio.barrier_to_dict(union.merged, union.alpha,
                                 {"certified": True, "active_member": union.active_index,
                                  "member_alphas": [r.alpha for r in results if r.certified],
                                  "verification": rep.verification}))
    run.json(out / "report.json", report)
    run.finish(out / "manifest.json")
    passed = rep.verification["passed"] and rep.containment["passed"]
    passed = passed and all(s["passed"] for s in safety.values())
    return OK if passed else VERIFY_FAIL


def cmd_verify(args):
    d = pio.load_system(args.system)
    b, alpha = pio.load_barrier(args.barrier)
    if args.alpha is not None:
        alpha = LeakyAlpha.linear(args.alpha)
    tol = args.tol if args.tol is not None else 1e-6
    rep = verify(b, d, alpha, tol=tol)
    s = rep.summary()
    print(f"{'PASS' if rep.passed else 'FAIL'} min_residual={rep.min_residual:.6g} "
          f"worst_cell={rep.worst_cell} worst_point={np.round(rep.worst_point, 6).tolist()}")
    if args.out:
        run = _Run(args, {"system": args.system, "barrier": args.barrier}, {"tol": tol})
        run.json(args.out, s)
        run.finish(_manifest_for(args.out))
    return OK if rep.passed else VERIFY_FAIL


def _traj_rows(tr):
    return [[t, *x] for t, x in zip(tr.times, tr.states)]


def cmd_simulate(args):
    d = pio.load_system(args.system)
    if len(args.x0) != d.n:
        raise pio.InputError(f"--x0 needs {d.n} numbers")
    run = _Run(args, {"system": args.system}, {"x0": args.x0, "dt": args.dt, "T": args.T})
    tr = simulate(d, args.x0, args.dt, args.T)
    header = ["t"] + [f"x{i + 1}" for i in range(d.n)]
    run.csv(args.out, header, _traj_rows(tr))
    if tr.exited:
        print(f"DomainExit at t={tr.exit_time:g}")
    print(f"{len(tr.times)} rows -> {args.out}")
    run.finish(_manifest_for(args.out))
    return OK


def cmd_export(args):
    b, _ = pio.load_barrier(args.barrier)
    out = Path(args.out)
    run = _Run(args, {"barrier": args.barrier}, {"what": args.what})
    if args.what == "superlevel":
        sl = superlevel_set(b)
        polys = [{"cell": c, "vertices": p.ordered_vertices() if p.n == 2 else p.vertices, "area": p.volume}
                 for p, c in zip(sl.polytopes, sl.cells)]
        run.json(out, {"polygons": polys, "area": sl.area})
        print(f"{len(polys)} polygons, area {sl.area:.6g}")
    elif args.what == "partition":
        cells = []
        for i, c in enumerate(b.partition.cells):
            V = c.ordered_vertices() if c.n == 2 else c.vertices
            cells.append({"cell": i, "vertices": V, "h": V @ b.S[i] + b.T[i]})
        run.json(out, {"cells": cells})
        print(f"{len(cells)} cells")
    else:
        if not args.system or not args.x0:
            raise pio.InputError("trajectories export needs --system and at least one --x0")
        d = pio.load_system(args.system)
        header = ["t"] + [f"x{i + 1}" for i in range(d.n)]
        index = []
        for k, x0 in enumerate(args.x0):
            tr = simulate(d, x0, args.dt, args.T)
            path = out / f"traj_{k:03d}.csv"
            run.csv(path, header, _traj_rows(tr))
            h = b(tr.states)
            index.append({"x0": x0, "file": path.name, "exited": tr.exited, "min_h": float(np.min(h))})
        run.json(out / "trajectories.json", {"trajectories": index})
        print(f"{len(index)} trajectories -> {out}")
    run.finish(out / "manifest.json" if args.what == "trajectories" else _manifest_for(out))
    return OK


def cmd_fixtures(args):
    """Write the benchmark systems and regenerate the ReLU stand-in weights."""
    out = Path(args.out)
    run = _Run(args, {}, {"seed": args.seed, "grid": args.grid})
    run.json(out / "pendulum_system.json", pio.system_to_dict(fx.pendulum_system(args.grid)))
    run.json(out / "example2_system.json", pio.system_to_dict(fx.example2_system(args.grid)))
    run.json(out / "linear_stable.json", pio.system_to_dict(fx.linear_system(-1.0)))
    run.json(out / "linear_unstable.json", pio.system_to_dict(fx.linear_system(+1.0)))
    run.json(out / "single_neuron.json", fx.relu_to_json(fx.single_neuron()))
    for name, (fname, field, dom, m) in fx.WEIGHT_FILES.items():
        net = fx.fit_relu(field, dom, m, seed=args.seed)
        run.json(out / fname, fx.relu_to_json(net))
    run.finish(out / "manifest.json")
    print(f"fixtures -> {out}")
    return OK


# -- parser -----------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="pwabarrier", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def synth_flags(q):
        q.add_argument("--eps", type=float, help="eps1 = eps2 = eps3")
        q.add_argument("--max-rounds", type=int, dest="max_rounds")
        q.add_argument("--tol", type=float, help="verification tolerance")

    q = sub.add_parser("convert", help="ReLU weights -> PWA system")
    q.add_argument("weights")
    q.add_argument("--box", type=_floats, required=True, help="LO,HI or per-axis lows then highs")
    q.add_argument("--samples", type=int, default=10_000)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--tol-equiv", type=float, default=1e-9, dest="tol_equiv")
    q.add_argument("--out", default="system.json")
    q.set_defaults(func=cmd_convert)

    q = sub.add_parser("synth", help="synthesize a barrier for one alpha")
    q.add_argument("system")
    q.add_argument("--alpha", type=float, default=0.5)
    synth_flags(q)
    q.add_argument("--out", default="barrier.json")
    q.set_defaults(func=cmd_synth)

    q = sub.add_parser("uis", help="union of invariant sets over several alphas")
    q.add_argument("system")
    q.add_argument("--alphas", type=_floats, required=True)
    synth_flags(q)
    q.add_argument("--init-box", type=_floats, dest="init_box")
    q.add_argument("--unsafe-box", type=_floats, dest="unsafe_box")
    q.add_argument("--mc-samples", type=int, default=100_000, dest="mc_samples")
    q.add_argument("--grid", type=int, default=200)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", default="uis_out")
    q.set_defaults(func=cmd_uis)

    q = sub.add_parser("verify", help="check a barrier against a system")
    q.add_argument("system")
    q.add_argument("barrier")
    q.add_argument("--alpha", type=float, help="override with a linear alpha")
    q.add_argument("--tol", type=float)
    q.add_argument("--out")
    q.set_defaults(func=cmd_verify)

    q = sub.add_parser("simulate", help="RK4 trajectory to CSV")
    q.add_argument("system")
    q.add_argument("--x0", type=_floats, required=True)
    q.add_argument("--dt", type=float, default=1e-3)
    q.add_argument("--T", type=float, default=10.0)
    q.add_argument("--out", default="trajectory.csv")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("export", help="plot data for a barrier")
    q.add_argument("barrier")
    q.add_argument("--what", choices=("superlevel", "partition", "trajectories"), default="superlevel")
    q.add_argument("--system")
    q.add_argument("--x0", type=_floats, action="append")
    q.add_argument("--dt", type=float, default=1e-3)
    q.add_argument("--T", type=float, default=10.0)
    q.add_argument("--out", default="export.json")
    q.set_defaults(func=cmd_export)

    q = sub.add_parser("fixtures", help="write benchmark systems and weight files")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--grid", type=int, default=16)
    q.add_argument("--out", default="fixtures")
    q.set_defaults(func=cmd_fixtures)
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args._argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (pio.InputError, PartitionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except PWAError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
