"""PWA barrier functions, leaky-ReLU class-K functions and certificate checks.

On a cell ``X_i`` the barrier is ``h_i(x) = s_i . x + t_i``. With affine
dynamics on the same cell both ``h`` and its Lie derivative are affine, so
the decay condition ``hdot >= -alpha(h)`` holds on the whole cell as soon as
it holds at the vertices. A leaky alpha is only piecewise linear in ``h``;
cells where ``h`` changes sign are cut along ``h = 0`` first.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import AffinePiece, PWADynamics
from .errors import DomainMismatch, OutOfDomain
from .geometry import (
    Partition,
    Polytope,
    build_index_sets,
    intersect,
    product_partition,
    same_domain,
)

TOL_VERIFY = 1e-6


class PWABarrier:
    def __init__(self, partition: Partition, S, T):
        self.partition = partition
        self.S = np.atleast_2d(np.asarray(S, float))
        self.T = np.asarray(T, float).reshape(-1)
        if self.S.shape != (len(partition), partition.n) or self.T.shape != (len(partition),):
            raise ValueError("need one (s, t) pair per cell")

    @classmethod
    def from_coeffs(cls, partition, coeffs):
        return cls(partition, [c[0] for c in coeffs], [c[1] for c in coeffs])

    @property
    def coeffs(self):
        return [(s, float(t)) for s, t in zip(self.S, self.T)]

    def __call__(self, X):
        return eval_barrier(self, X)

    def vertex_values(self):
        """h_i(v) for every (cell, vertex) incidence, as a list of arrays per cell."""
        return [c.vertices @ s + t for c, s, t in zip(self.partition.cells, self.S, self.T)]

    def continuity_gap(self):
        reg = self.partition.registry
        gap = 0.0
        for k, cells in enumerate(reg.vertex_cells):
            if len(cells) > 1:
                vals = self.S[cells] @ reg.points[k] + self.T[cells]
                gap = max(gap, float(vals.max() - vals.min()))
        return gap

    def boundary_max(self):
        """Largest value of h at vertices on the domain boundary."""
        ix = build_index_sets(self.partition)
        reg = self.partition.registry
        vals = [self.S[i] @ reg.points[k] + self.T[i] for i, k in ix.boundary_pairs]
        return float(max(vals)) if vals else -np.inf


def eval_barrier(b: PWABarrier, x, strict=True):
    X = np.asarray(x, float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if strict:
        idx = b.partition.locate(X)
        if np.any(idx < 0):
            raise OutOfDomain(f"point {X[np.argmin(idx)]} lies outside the partition")
    else:
        idx = b.partition.nearest(X)
    out = np.einsum("pn,pn->p", b.S[idx], X) + b.T[idx]
    return float(out[0]) if single else out


@dataclass(frozen=True)
class LeakyAlpha:
    """``v -> alpha_m * v`` for v >= 0 and ``alpha_1 * v`` for v < 0."""

    alpha_1: float
    alpha_m: float

    def __post_init__(self):
        if not (0 < self.alpha_1 <= self.alpha_m):
            raise ValueError(f"need 0 < alpha_1 <= alpha_m, got {self.alpha_1}, {self.alpha_m}")

    @classmethod
    def linear(cls, alpha):
        return cls(float(alpha), float(alpha))

    @property
    def is_linear(self):
        return self.alpha_1 == self.alpha_m

    def __call__(self, v):
        return leaky_alpha(self, v)


def leaky_alpha(a: LeakyAlpha, v):
    v = np.asarray(v, float)
    out = np.where(v >= 0, a.alpha_m * v, a.alpha_1 * v)
    return float(out) if out.ndim == 0 else out


def lie_derivative(s, piece: AffinePiece, x):
    """Rate of change of ``s . x + t`` along ``xdot = A x + a``."""
    return np.asarray(piece(x)) @ np.asarray(s, float)


def _as_alpha(a):
    return a if isinstance(a, LeakyAlpha) else LeakyAlpha.linear(a)


@dataclass
class VerificationReport:
    passed: bool
    min_residual: float
    worst_cell: int
    worst_point: np.ndarray
    residuals: np.ndarray  # rows: cell, h, hdot, residual, x_1..x_n
    continuity_gap: float
    boundary_max: float
    alpha: LeakyAlpha
    tol: float = TOL_VERIFY

    def summary(self):
        return {
            "passed": bool(self.passed),
            "min_residual": float(self.min_residual),
            "worst_cell": int(self.worst_cell),
            "worst_point": [float(v) for v in self.worst_point],
            "continuity_gap": float(self.continuity_gap),
            "boundary_max_h": float(self.boundary_max),
            "alpha_1": self.alpha.alpha_1,
            "alpha_m": self.alpha.alpha_m,
            "checked_points": int(len(self.residuals)),
        }


def verify(b: PWABarrier, d: PWADynamics, a, tol=TOL_VERIFY) -> VerificationReport:
    """Check ``hdot + alpha(h) >= 0`` at every vertex of every (sign-split) cell.

    Raises PartitionMismatch if a barrier cell does not sit inside a single
    dynamics cell.
    """
    a = _as_alpha(a)
    parents = b.partition.parents_in(d.partition)
    rows = []
    for i, (cell, s, t) in enumerate(zip(b.partition.cells, b.S, b.T)):
        j = parents[i]
        A, off = d.A[j], d.a[j]
        h = cell.vertices @ s + t
        pieces = [(cell.vertices, None)]
        if not a.is_linear and h.min() < -1e-12 and h.max() > 1e-12:
            pieces = []
            for sign, branch in ((1.0, a.alpha_m), (-1.0, a.alpha_1)):
                part = cell.halfspace(sign * s, sign * t)
                if part.is_full_dim:
                    pieces.append((part.vertices, branch))
        for V, slope in pieces:
            hv = V @ s + t
            hdot = (V @ A.T + off) @ s
            alpha_h = leaky_alpha(a, hv) if slope is None else slope * hv
            r = hdot + alpha_h
            rows.append(np.column_stack([np.full(len(V), i), hv, hdot, r, V]))
    R = np.vstack(rows)
    w = int(np.argmin(R[:, 3]))
    return VerificationReport(
        passed=bool(R[w, 3] >= -tol),
        min_residual=float(R[w, 3]),
        worst_cell=int(R[w, 0]),
        worst_point=R[w, 4:].copy(),
        residuals=R,
        continuity_gap=b.continuity_gap(),
        boundary_max=b.boundary_max(),
        alpha=a,
        tol=tol,
    )


@dataclass
class UnionBarrier:
    members: list
    merged: PWABarrier
    active_index: np.ndarray
    alpha: LeakyAlpha

    def __call__(self, X):
        return self.merged(X)


def _member_coeffs(bs, cells):
    cents = np.array([c.centroid for c in cells])
    out = []
    for b in bs:
        idx = b.partition.locate(cents)
        if np.any(idx < 0):
            raise DomainMismatch("product cell not covered by a member partition")
        out.append((b.S[idx], b.T[idx]))
    return out


def max_combine(bs, a: LeakyAlpha, tol=1e-9) -> UnionBarrier:
    """Pointwise maximum of several barriers as one PWA barrier.

    The product partition is cut further along ``h_i = h_j`` so that each
    final cell has a single maximizing member.
    """
    bs = list(bs)
    if not bs:
        raise ValueError("need at least one barrier")
    for b in bs[1:]:
        if not same_domain(b.partition.domain, bs[0].partition.domain):
            raise DomainMismatch("member barriers live on different domains")
    prod = product_partition([b.partition for b in bs])
    coeffs = _member_coeffs(bs, prod.cells)
    cells, S, T, active = [], [], [], []
    for c_idx, cell in enumerate(prod.cells):
        funcs = []  # distinct (s, t, first member index)
        for k, (Sk, Tk) in enumerate(coeffs):
            s, t = Sk[c_idx], Tk[c_idx]
            if not any(np.max(np.abs(s - f[0])) <= tol and abs(t - f[1]) <= tol for f in funcs):
                funcs.append((s, t, k))
        V = cell.vertices
        vals = np.array([V @ s + t for s, t, _ in funcs])  # (F, nv)
        # single winner at every vertex -> winner everywhere (max of affine is convex)
        winners = [f for f in range(len(funcs)) if np.all(vals[f] >= vals.max(axis=0) - tol)]
        if winners:
            s, t, k = funcs[winners[0]]
            cells.append(cell)
            S.append(s)
            T.append(t)
            active.append(k)
            continue
        for f in range(len(funcs)):
            s, t, k = funcs[f]
            E = [s - g[0] for g_i, g in enumerate(funcs) if g_i != f]
            e = [t - g[1] for g_i, g in enumerate(funcs) if g_i != f]
            region = intersect(cell, Polytope(np.array(E), np.array(e)))
            if region.is_full_dim:
                cells.append(region)
                S.append(s)
                T.append(t)
                active.append(k)
    merged = PWABarrier(Partition(cells, prod.domain), np.array(S), np.array(T))
    return UnionBarrier(bs, merged, np.asarray(active, int), a)


@dataclass
class SuperlevelSet:
    polytopes: list = field(default_factory=list)
    cells: list = field(default_factory=list)  # source cell per polytope

    @property
    def area(self):
        return float(sum(p.volume for p in self.polytopes))

    def __len__(self):
        return len(self.polytopes)


def superlevel_set(b: PWABarrier) -> SuperlevelSet:
    """``{x : h(x) >= 0}`` as one polytope per cell where it is full-dimensional."""
    out = SuperlevelSet()
    for i, (cell, s, t) in enumerate(zip(b.partition.cells, b.S, b.T)):
        h = cell.vertices @ s + t
        if h.max() <= 0:
            continue
        piece = cell if h.min() >= 0 else cell.halfspace(s, t)
        if piece.is_full_dim:
            out.polytopes.append(piece)
            out.cells.append(i)
    return out


def monte_carlo_area(h, domain: Polytope, samples=100_000, seed=0):
    """Estimate the measure of ``{x in domain : h(x) >= 0}`` by uniform box sampling."""
    rng = np.random.default_rng(seed)
    lo, hi = domain.bbox
    X = rng.uniform(lo, hi, size=(samples, len(lo)))
    inside = domain.contains(X)
    hit = np.zeros(samples, bool)
    hit[inside] = np.asarray(h(X[inside])) >= 0
    return float(np.prod(hi - lo) * hit.mean())
