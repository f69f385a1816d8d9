"""Piecewise-affine vector fields, ReLU network conversion and RK4 simulation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateArrangement, DegenerateSimplex, OutOfDomain
from .geometry import TOL_GEOM, Partition, Polytope, intersect

TOL_CONT = 1e-6


@dataclass(frozen=True)
class AffinePiece:
    A: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, float))
        a = np.asarray(self.a, float).reshape(-1)
        if A.shape != (len(a), len(a)):
            raise ValueError(f"affine piece shapes {A.shape} and {a.shape} disagree")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(a))):
            raise ValueError("affine piece has non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "a", a)

    def __call__(self, x):
        return np.asarray(x) @ self.A.T + self.a


class PWADynamics:
    """``xdot = A_i x + a_i`` on cell ``i`` of ``partition``."""

    def __init__(self, partition: Partition, pieces):
        self.partition = partition
        self.pieces = list(pieces)
        if len(self.pieces) != len(partition):
            raise ValueError("need one affine piece per cell")
        self.A = np.array([p.A for p in self.pieces])
        self.a = np.array([p.a for p in self.pieces])

    @property
    def n(self):
        return self.partition.n

    def __call__(self, X):
        return eval_dynamics(self, X)

    def continuity_gap(self):
        """Largest jump of the field between cells at shared vertices."""
        reg = self.partition.registry
        gap = 0.0
        for k, cells in enumerate(reg.vertex_cells):
            if len(cells) < 2:
                continue
            v = reg.points[k]
            vals = self.A[cells] @ v + self.a[cells]
            gap = max(gap, float(np.max(vals.max(axis=0) - vals.min(axis=0))))
        return gap

    def triangulated(self) -> "PWADynamics":
        if self.partition.is_simplicial:
            return self
        simp, parent = self.partition.triangulation_map()
        return PWADynamics(simp, [self.pieces[i] for i in parent])

    def restrict(self, fine: Partition) -> "PWADynamics":
        """Same field expressed on a refinement of its partition."""
        par = fine.parents_in(self.partition)
        return PWADynamics(fine, [self.pieces[i] for i in par])


def eval_dynamics(d: PWADynamics, x, strict=True):
    X = np.asarray(x, float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if strict:
        idx = d.partition.locate(X)
        if np.any(idx < 0):
            raise OutOfDomain(f"point {X[np.argmin(idx)]} lies outside the partition")
    else:
        idx = d.partition.nearest(X)
    out = np.einsum("pij,pj->pi", d.A[idx], X) + d.a[idx]
    return out[0] if single else out


@dataclass(frozen=True)
class ReLUNetwork:
    """``x -> W2 relu(W1 x + b1) + b2`` with one hidden layer."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2"):
            arr = np.asarray(getattr(self, name), float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "W1", np.atleast_2d(self.W1))
        object.__setattr__(self, "W2", np.atleast_2d(self.W2))
        m, n = self.W1.shape
        if m < 1 or self.b1.shape != (m,) or self.W2.shape != (n, m) or self.b2.shape != (n,):
            raise ValueError("inconsistent ReLU network shapes")

    @property
    def hidden(self):
        return self.W1.shape[0]

    def __call__(self, X):
        H = np.maximum(np.asarray(X) @ self.W1.T + self.b1, 0.0)
        return H @ self.W2.T + self.b2

    def pattern(self, X):
        return (np.asarray(X) @ self.W1.T + self.b1) >= 0


def relu_to_pwa(net: ReLUNetwork, domain: Polytope, tol=TOL_GEOM) -> PWADynamics:
    """Exact PWA form of ``net`` over ``domain``, one cell per activation region.

    Regions are found by splitting the domain with each neuron's hyperplane
    in turn and discarding lower-dimensional pieces.
    """
    W, b = net.W1, net.b1
    norms = np.linalg.norm(W, axis=1)
    live = norms > 1e-12
    Hn = np.hstack([W, b[:, None]])[live] / norms[live, None]
    ids = np.flatnonzero(live)
    for a in range(len(Hn)):
        for c in range(a + 1, len(Hn)):
            if np.max(np.abs(Hn[a] - Hn[c])) <= tol or np.max(np.abs(Hn[a] + Hn[c])) <= tol:
                raise DegenerateArrangement(
                    f"neurons {ids[a]} and {ids[c]} share a hyperplane; "
                    "perturb one of their weights slightly and retry")

    regions = [(domain, [])]
    for j in range(net.hidden):
        if not live[j]:
            regions = [(r, pat + [bool(b[j] >= 0)]) for r, pat in regions]
            continue
        nxt = []
        for r, pat in regions:
            on = intersect(r, Polytope(W[j:j + 1], [b[j]]))
            off = intersect(r, Polytope(-W[j:j + 1], [-b[j]]))
            if on.is_full_dim:
                nxt.append((on, pat + [True]))
            if off.is_full_dim:
                nxt.append((off, pat + [False]))
        regions = nxt

    cells, pieces = [], []
    for r, pat in regions:
        D = np.asarray(pat, float)
        cells.append(r)
        pieces.append(AffinePiece(net.W2 @ (D[:, None] * net.W1), net.W2 @ (D * net.b1) + net.b2))
    return PWADynamics(Partition(cells, domain), pieces)


def pwa_interpolate(field, part: Partition) -> PWADynamics:
    """Affine interpolant of ``field`` on each simplex, exact at the vertices.

    ``field`` maps an (m, n) array of points to an (m, n) array of vectors.
    """
    pieces = []
    for i, cell in enumerate(part.cells):
        V = cell.vertices
        n = part.n
        if len(V) != n + 1:
            raise DegenerateSimplex(f"cell {i} is not a simplex")
        F = np.asarray(field(V), float).reshape(n + 1, n)
        M = np.hstack([V, np.ones((n + 1, 1))])
        if abs(np.linalg.det(M)) < 1e-14:
            raise DegenerateSimplex(f"cell {i} has a singular vertex matrix")
        sol = np.linalg.solve(M, F)  # rows: A^T then a
        pieces.append(AffinePiece(sol[:n].T, sol[n]))
    return PWADynamics(part, pieces)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    exited: bool = False
    exit_time: float = None
    events: list = field(default_factory=list)

    def rows(self):
        return [(float(t), x) for t, x in zip(self.times, self.states)]


def _rk4_step(f, X, dt):
    k1 = f(X)
    k2 = f(X + 0.5 * dt * k1)
    k3 = f(X + 0.5 * dt * k2)
    k4 = f(X + dt * k3)
    return X + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate_batch(d: PWADynamics, X0, dt, T):
    """Fixed-step RK4 for many initial states at once.

    Returns (times, states, exit_step); ``states`` has shape (K+1, B, n) and
    is NaN after a trajectory leaves the domain. ``exit_step[b]`` is the step
    at which trajectory b left (-1 if it never did).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    X0 = np.atleast_2d(np.asarray(X0, float))
    dom = d.partition.domain
    if not np.all(dom.contains(X0)):
        raise OutOfDomain("initial state outside the domain")
    steps = int(round(T / dt))
    f = lambda X: eval_dynamics(d, X, strict=False)
    states = np.full((steps + 1,) + X0.shape, np.nan)
    states[0] = X0
    exit_step = -np.ones(len(X0), int)
    alive = np.ones(len(X0), bool)
    X = X0.copy()
    for k in range(1, steps + 1):
        if not alive.any():
            break
        Xn = _rk4_step(f, X[alive], dt)
        inside = dom.contains(Xn)
        idx = np.flatnonzero(alive)
        exit_step[idx[~inside]] = k
        X[idx] = Xn
        alive[idx[~inside]] = False
        states[k, alive] = X[alive]
    return np.arange(steps + 1) * dt, states, exit_step


def simulate(d: PWADynamics, x0, dt, T) -> Trajectory:
    """RK4 trajectory from ``x0``; stops with a DomainExit event on leaving the domain."""
    times, states, exit_step = simulate_batch(d, [x0], dt, T)
    k = int(exit_step[0])
    if k < 0:
        return Trajectory(times, states[:, 0])
    return Trajectory(times[:k], states[:k, 0], exited=True, exit_time=float(times[k]),
                      events=[("DomainExit", float(times[k]))])
