"""Barrier synthesis by linear programming, refinement, and union of invariant sets.

For a fixed linear decay rate ``alpha`` the LP searches for a continuous
PWA barrier that is at most ``-eps1`` at domain-boundary vertices, at least
``eps2`` at interior vertices and satisfies ``hdot + alpha h >= eps3`` at
every vertex of every cell. The first two families carry slacks (one per
cell); a zero total boundary slack means the superlevel set is a certified
invariant set. Otherwise cells with positive slack are bisected and the LP
is solved again.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import lp as _lp
from .barrier import (
    LeakyAlpha,
    PWABarrier,
    UnionBarrier,
    VerificationReport,
    max_combine,
    monte_carlo_area,
    superlevel_set,
    verify,
)
from .dynamics import TOL_CONT, PWADynamics, eval_dynamics
from .errors import NoCertifiedMember, NumericalFailure, SolverFailure
from .geometry import Partition, build_index_sets, refine_cells

log = logging.getLogger(__name__)

EXCLUDE_BOUNDARY = "exclude_boundary"
INCLUDE_INTERIOR = "include_interior"
DECAY = "decay"
CONTINUITY = "continuity"


@dataclass
class SynthesisConfig:
    alpha: float = 0.5
    eps1: float = 1e-4
    eps2: float = 1e-4
    eps3: float = 1e-4
    max_refine_rounds: int = 10
    tol_lp: float = _lp.TOL_LP
    tol_verify: float = 1e-6
    lp_method: str = "highs"
    objective: str = "lexicographic"
    max_cells: int = 50_000

    def __post_init__(self):
        if min(self.eps1, self.eps2, self.eps3) <= 0:
            raise ValueError("eps1, eps2, eps3 must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.max_refine_rounds < 0:
            raise ValueError("max_refine_rounds must be >= 0")
        if self.objective not in ("lexicographic", "sum"):
            raise ValueError("objective must be 'lexicographic' or 'sum'")


@dataclass
class _Layout:
    n: int
    ncells: int
    tau_b: dict  # cell -> variable index
    tau_int: dict
    index_sets: object

    def s(self, i):
        return i * (self.n + 1)

    def t(self, i):
        return i * (self.n + 1) + self.n


def _assemble(part: Partition, d: PWADynamics, cfg: SynthesisConfig):
    parents = part.parents_in(d.partition)
    ix = build_index_sets(part)
    reg = part.registry
    n, N = part.n, len(part)
    nv = N * (n + 1)
    tau_b = {c: nv + k for k, c in enumerate(ix.boundary_cells)}
    int_cells = ix.interior_cells
    tau_int = {c: nv + len(tau_b) + k for k, c in enumerate(int_cells)}
    lay = _Layout(n, N, tau_b, tau_int, ix)

    num = nv + len(tau_b) + len(tau_int)
    lower = np.full(num, -np.inf)
    lower[nv:] = 0.0
    obj = np.zeros(num)
    obj[nv:] = 1.0
    names = [f"{'s' if j < n else 't'}[{i}]" + (f"[{j}]" if j < n else "") for i in range(N) for j in range(n + 1)]
    names += [f"tau_b[{c}]" for c in tau_b] + [f"tau_int[{c}]" for c in int_cells]
    prog = _lp.LinearProgram(num, objective=obj, lower=lower, names=names)

    def h_coeffs(i, v):
        row = {lay.s(i) + j: float(v[j]) for j in range(n)}
        row[lay.t(i)] = 1.0
        return row

    for i, k in ix.boundary_pairs:
        row = h_coeffs(i, reg.points[k])
        row[tau_b[i]] = -1.0
        prog.add_constraint(row, _lp.LE, -cfg.eps1, EXCLUDE_BOUNDARY)
    for i, k in ix.interior_pairs:
        row = h_coeffs(i, reg.points[k])
        row[tau_int[i]] = 1.0
        prog.add_constraint(row, _lp.GE, cfg.eps2, INCLUDE_INTERIOR)
    for i, ids in enumerate(reg.cell_vertices):
        j = parents[i]
        for k in ids:
            v = reg.points[k]
            f = d.A[j] @ v + d.a[j]
            g = f + cfg.alpha * v
            row = {lay.s(i) + q: float(g[q]) for q in range(n)}
            row[lay.t(i)] = cfg.alpha
            prog.add_constraint(row, _lp.GE, cfg.eps3, DECAY)
    for k, cells in enumerate(reg.vertex_cells):
        v = reg.points[k]
        c0 = cells[0]
        for c in cells[1:]:
            row = h_coeffs(c0, v)
            for key, val in h_coeffs(c, v).items():
                row[key] = row.get(key, 0.0) - val
            prog.add_constraint(row, _lp.EQ, 0.0, CONTINUITY)
    return prog, lay


def _solve(prog, cfg):
    sol = _lp.solve(prog, method=cfg.lp_method)
    if not sol.optimal:
        raise SolverFailure(f"synthesis LP returned {sol.status.value}")
    return sol.values


def _solve_synthesis_lp(prog, lay, cfg):
    """Solve the assembled LP.

    With ``objective="sum"`` this is the plain slack-sum LP. The default
    ``"lexicographic"`` mode first minimizes the boundary slack alone, then
    minimizes the slack sum with the boundary slack held at that minimum.
    Under refinement the number of interior cells that must be excluded
    grows faster than the number of boundary cells, so the plain sum tends
    to trade a small boundary violation for interior coverage and never
    certifies.
    """
    if cfg.objective == "sum" or not lay.tau_b:
        return _solve(prog, cfg)
    tb = np.fromiter(lay.tau_b.values(), int)
    full_obj = prog.objective.copy()
    stage1 = np.zeros_like(full_obj)
    stage1[tb] = 1.0
    prog.objective = stage1
    x1 = _solve(prog, cfg)
    # hold the boundary slack at its stage-1 optimum, then spend the rest
    prog.add_constraint({int(j): 1.0 for j in tb}, _lp.LE, float(x1[tb].sum()) + cfg.tol_lp)
    prog.objective = full_obj
    try:
        return _solve(prog, cfg)
    except (SolverFailure, NumericalFailure):
        log.warning("second stage failed numerically; keeping the boundary-slack optimum")
        return x1
    finally:
        for lst in (prog._cols, prog._vals, prog.relations, prog.rhs, prog.tags):
            lst.pop()


def assemble_lp(part: Partition, d: PWADynamics, cfg: SynthesisConfig) -> _lp.LinearProgram:
    """The synthesis LP for ``part`` (which must refine ``d.partition``)."""
    return _assemble(part, d, cfg)[0]


@dataclass
class SynthesisResult:
    barrier: PWABarrier
    certified: bool
    tau_b_sum: float
    tau_int_sum: float
    M: int
    N: int
    partition_used: Partition
    rounds_used: int
    alpha: float
    dynamics: PWADynamics = None
    tau_b: dict = field(default_factory=dict)
    tau_int: dict = field(default_factory=dict)
    report: VerificationReport = None
    history: list = field(default_factory=list)

    def summary(self):
        return {
            "alpha": self.alpha,
            "certified": bool(self.certified),
            "tau_b_sum": float(self.tau_b_sum),
            "tau_int_sum": float(self.tau_int_sum),
            "M": self.M,
            "N": self.N,
            "cells": len(self.partition_used),
            "rounds": self.rounds_used,
            "history": self.history,
        }


def _check_equilibrium(d):
    dom = d.partition.domain
    z = np.zeros(d.n)
    if not dom.contains(z).item():
        warnings.warn("origin is outside the domain; equilibrium premise not met", stacklevel=3)
        return
    gap = float(np.max(np.abs(eval_dynamics(d, z))))
    if gap > TOL_CONT:
        warnings.warn(f"dynamics do not vanish at the origin (|f(0)|_inf = {gap:.3g})", stacklevel=3)


def synthesize(d: PWADynamics, cfg: SynthesisConfig = None, partition: Partition = None) -> SynthesisResult:
    """Solve the synthesis LP, refining slack-carrying cells until certified.

    Stops after ``cfg.max_refine_rounds`` refinements (or once the partition
    would exceed ``cfg.max_cells``) and returns an uncertified result.
    """
    cfg = cfg or SynthesisConfig()
    d = d.triangulated()
    _check_equilibrium(d)
    part = partition if partition is not None else d.partition
    if not part.is_simplicial:
        part = part.triangulated()
    rounds = 0
    history = []
    while True:
        prog, lay = _assemble(part, d, cfg)
        x = _solve_synthesis_lp(prog, lay, cfg)
        tb = {c: float(x[j]) for c, j in lay.tau_b.items()}
        ti = {c: float(x[j]) for c, j in lay.tau_int.items()}
        tb_sum, ti_sum = sum(tb.values()), sum(ti.values())
        history.append({"round": rounds, "cells": len(part), "tau_b_sum": tb_sum, "tau_int_sum": ti_sum})
        log.info("alpha=%g round %d: %d cells, tau_b=%.3g tau_int=%.3g",
                 cfg.alpha, rounds, len(part), tb_sum, ti_sum)
        certified = tb_sum <= cfg.tol_lp
        if certified or rounds >= cfg.max_refine_rounds:
            break
        flagged = [c for c, v in tb.items() if v > cfg.tol_lp] + [c for c, v in ti.items() if v > cfg.tol_lp]
        nxt = refine_cells(part, flagged)
        if len(nxt) > cfg.max_cells:
            log.warning("refinement would exceed max_cells=%d; stopping", cfg.max_cells)
            break
        part = nxt
        rounds += 1

    S = np.array([x[lay.s(i):lay.s(i) + part.n] for i in range(len(part))])
    T = np.array([x[lay.t(i)] for i in range(len(part))])
    barrier = PWABarrier(part, S, T)
    res = SynthesisResult(
        barrier=barrier,
        certified=certified,
        tau_b_sum=tb_sum,
        tau_int_sum=ti_sum,
        M=len(lay.index_sets.boundary_pairs),
        N=len(lay.index_sets.interior_pairs),
        partition_used=part,
        rounds_used=rounds,
        alpha=cfg.alpha,
        dynamics=d,
        tau_b=tb,
        tau_int=ti,
        history=history,
    )
    res.report = verify(barrier, d, cfg.alpha, tol=cfg.tol_verify)
    if certified and not res.report.passed:
        log.warning("LP certified alpha=%g but vertex check failed (min residual %.3g)",
                    cfg.alpha, res.report.min_residual)
    return res


# -- union of invariant sets ------------------------------------------------


def grid_points(domain, per_axis=200):
    lo, hi = domain.bbox
    axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    return G[domain.contains(G)]


@dataclass
class UISReport:
    alphas: list
    members: list  # per-alpha summaries
    merged_alpha: tuple
    merged_area: float
    member_areas: dict
    merged_area_mc: float
    member_areas_mc: dict
    strict_gain: bool
    verification: dict
    containment: dict

    def to_dict(self):
        return asdict(self)


def containment_check(union: UnionBarrier, per_axis=200):
    """Grid points where some member is nonnegative but the merged barrier is not."""
    dom = union.merged.partition.domain
    G = grid_points(dom, per_axis)
    hbar = union.merged(G)
    out = {"grid_points": int(len(G)), "violations": 0, "per_member": []}
    for b in union.members:
        inside = b(G) >= 0
        bad = int(np.sum(inside & (hbar < 0)))
        out["per_member"].append({"inside": int(inside.sum()), "violations": bad})
        out["violations"] += bad
    out["passed"] = out["violations"] == 0
    return out


def uis(d: PWADynamics, alphas, cfg: SynthesisConfig = None, mc_samples=100_000, grid=200, seed=0):
    """Union of invariant sets: one synthesis per alpha, merged with a leaky alpha.

    Returns (UnionBarrier, UISReport, list of SynthesisResult).
    """
    cfg = cfg or SynthesisConfig()
    alphas = [float(a) for a in alphas]
    if not alphas or min(alphas) <= 0:
        raise ValueError("alphas must be a non-empty list of positive numbers")
    if alphas != sorted(alphas):
        raise ValueError("alphas must be sorted in ascending order")
    results = []
    for a in alphas:
        results.append(synthesize(d, _with_alpha(cfg, a)))
    good = [r for r in results if r.certified]
    if not good:
        raise NoCertifiedMember(f"no alpha in {alphas} produced a certified invariant set", results)
    la = LeakyAlpha(min(r.alpha for r in good), max(r.alpha for r in good))
    union = max_combine([r.barrier for r in good], la)
    dyn = good[0].dynamics
    rep = verify(union.merged, dyn, la, tol=cfg.tol_verify)
    dom = dyn.partition.domain
    member_areas = {str(r.alpha): superlevel_set(r.barrier).area for r in good}
    merged_area = superlevel_set(union.merged).area
    mc = {str(r.alpha): monte_carlo_area(r.barrier, dom, mc_samples, seed) for r in good}
    merged_mc = monte_carlo_area(union.merged, dom, mc_samples, seed)
    report = UISReport(
        alphas=alphas,
        members=[r.summary() for r in results],
        merged_alpha=(la.alpha_1, la.alpha_m),
        merged_area=merged_area,
        member_areas=member_areas,
        merged_area_mc=merged_mc,
        member_areas_mc=mc,
        strict_gain=bool(merged_area > max(member_areas.values()) + 1e-6),
        verification=rep.summary(),
        containment=containment_check(union, grid),
    )
    return union, report, results


def _with_alpha(cfg, a):
    kw = asdict(cfg)
    kw["alpha"] = a
    return SynthesisConfig(**kw)
