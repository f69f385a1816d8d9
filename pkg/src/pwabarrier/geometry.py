"""Bounded polytopes, conforming partitions and simplicial refinement.

A polytope is stored in half-space form ``E x + e >= 0`` with unit-norm rows,
so a row residual is the signed distance to that facet. Vertices are found
by brute force over n-subsets of the rows, which is plenty for n <= 4.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import lp as _lp
from .errors import DomainMismatch, NotSimplicial, PartitionMismatch, UnboundedPolytope

TOL_GEOM = 1e-6


def dedupe_points(X, tol=TOL_GEOM):
    """Merge points closer than ``tol`` in the inf-norm.

    Returns (unique, inverse) with representatives in order of first
    appearance, so ``unique[inverse]`` approximates ``X``.
    """
    X = np.asarray(X, float)
    if len(X) == 0:
        return X.reshape(0, X.shape[-1] if X.ndim == 2 else 0), np.zeros(0, int)
    if len(X) < 64:
        labels = -np.ones(len(X), int)
        reps = []
        for i, x in enumerate(X):
            for k, r in enumerate(reps):
                if np.max(np.abs(X[r] - x)) <= tol:
                    labels[i] = k
                    break
            else:
                labels[i] = len(reps)
                reps.append(i)
        return X[reps], labels
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components
    from scipy.spatial import cKDTree

    pairs = cKDTree(X).query_pairs(tol, p=np.inf, output_type="ndarray")
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(X), len(X)))
    _, comp = connected_components(g, directed=False)
    # relabel components by first appearance
    first = {}
    labels = np.empty(len(X), int)
    reps = []
    for i, c in enumerate(comp):
        if c not in first:
            first[c] = len(reps)
            reps.append(i)
        labels[i] = first[c]
    return X[reps], labels


def affine_dimension(X, tol=TOL_GEOM):
    X = np.asarray(X, float)
    if len(X) == 0:
        return -1
    if len(X) == 1:
        return 0
    sv = np.linalg.svd(X[1:] - X[0], compute_uv=False)
    return int(np.sum(sv > tol))


def _normalize(E, e):
    E = np.atleast_2d(np.asarray(E, float))
    e = np.asarray(e, float).reshape(-1)
    if E.shape[0] != e.shape[0]:
        raise ValueError("E and e have inconsistent row counts")
    norms = np.linalg.norm(E, axis=1)
    scale = np.where(norms > 1e-14, norms, 1.0)
    return E / scale[:, None], e / scale


def _extreme_points(E, e, tol=TOL_GEOM):
    m, n = E.shape
    if m < n:
        return np.zeros((0, n))
    combos = np.array(list(itertools.combinations(range(m), n)), dtype=int)
    M = E[combos]
    rhs = -e[combos]
    ok = np.abs(np.linalg.det(M)) > 1e-12
    if not ok.any():
        return np.zeros((0, n))
    X = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
    feas = np.all(X @ E.T + e >= -tol, axis=1)
    return dedupe_points(X[feas], tol)[0]


class Polytope:
    """Bounded convex polytope ``{x : E x + e >= 0}``.

    ``vertices`` may be passed when they are already known (simplices built
    from points, cells read back from disk); otherwise they are enumerated
    on first access.
    """

    def __init__(self, E, e, vertices=None):
        self.E, self.e = _normalize(E, e)
        if vertices is not None:
            vertices = np.atleast_2d(np.asarray(vertices, float))
            if vertices.size == 0:
                vertices = np.zeros((0, self.E.shape[1]))
        self._vertices = vertices

    @classmethod
    def box(cls, lo, hi):
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        n = len(lo)
        E = np.vstack([np.eye(n), -np.eye(n)])
        e = np.concatenate([-lo, hi])
        corners = np.array(list(itertools.product(*zip(lo, hi))))
        return cls(E, e, corners)

    @classmethod
    def simplex(cls, points):
        """Simplex from its n+1 vertices; H-rep rows are the barycentric coordinates."""
        V = np.asarray(points, float)
        n = V.shape[1]
        if V.shape[0] != n + 1:
            raise ValueError("a simplex in R^n needs n+1 vertices")
        M = np.vstack([V.T, np.ones(n + 1)])
        Minv = np.linalg.inv(M)
        return cls(Minv[:, :n], Minv[:, n], V)

    @classmethod
    def from_points(cls, points):
        """Convex hull of a full-dimensional point set."""
        P = np.asarray(points, float)
        n = P.shape[1]
        if len(P) == n + 1:
            return cls.simplex(P)
        from scipy.spatial import ConvexHull

        hull = ConvexHull(P)
        return cls(-hull.equations[:, :n], -hull.equations[:, n], P[hull.vertices])

    @property
    def n(self):
        return self.E.shape[1]

    @property
    def vertices(self):
        if self._vertices is None:
            self._vertices = _extreme_points(self.E, self.e)
        return self._vertices

    @cached_property
    def dim(self):
        return affine_dimension(self.vertices)

    @property
    def is_empty(self):
        return self.dim < 0

    @property
    def is_full_dim(self):
        return self.dim == self.n

    @property
    def is_simplex(self):
        return self.is_full_dim and len(self.vertices) == self.n + 1

    def residuals(self, X):
        return np.atleast_2d(X) @ self.E.T + self.e

    def contains(self, X, tol=TOL_GEOM):
        return np.all(self.residuals(X) >= -tol, axis=-1)

    @property
    def centroid(self):
        return self.vertices.mean(axis=0)

    @cached_property
    def volume(self):
        if not self.is_full_dim:
            return 0.0
        return float(sum(_simplex_volume(s.vertices) for s in triangulate(self)))

    @property
    def bbox(self):
        V = self.vertices
        return V.min(axis=0), V.max(axis=0)

    def halfspace(self, s, t):
        """Intersection with ``{x : s.x + t >= 0}``."""
        return intersect(self, Polytope(np.atleast_2d(s), [t]))

    def ordered_vertices(self):
        """2-D vertices in counter-clockwise order (drawing order)."""
        V = self.vertices
        if self.n != 2 or len(V) < 3:
            return V
        c = V.mean(axis=0)
        ang = np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0])
        return V[np.argsort(ang)]

    def __repr__(self):
        return f"Polytope(n={self.n}, rows={len(self.e)}, vertices={len(self.vertices)})"


def _simplex_volume(V):
    n = V.shape[1]
    return abs(np.linalg.det(V[1:] - V[0])) / math.factorial(n)


def enumerate_vertices(p: Polytope, check_bounded=True):
    """Extreme points of ``p``; empty when ``p`` is infeasible or not full-dimensional."""
    if check_bounded:
        _check_bounded(p)
    X = _extreme_points(p.E, p.e)
    if affine_dimension(X) < p.n:
        return []
    return [x for x in X]


def _check_bounded(p):
    n = p.n
    for j in range(n):
        for sign in (1.0, -1.0):
            prog = _lp.LinearProgram(n)
            prog.objective[j] = sign
            for row, off in zip(p.E, p.e):
                prog.add_constraint(row, _lp.GE, -off)
            sol = _lp.solve(prog)
            if sol.status is _lp.Status.INFEASIBLE:
                return
            if sol.status is _lp.Status.UNBOUNDED:
                raise UnboundedPolytope(f"polytope is unbounded along {'+-'[sign < 0]}x{j + 1}")


def _facet_rows(E, e, V, tol=TOL_GEOM):
    """Indices of rows that support a facet of the full-dimensional hull of V."""
    n = E.shape[1]
    tight = np.abs(V @ E.T + e) <= tol  # (nv, m)
    keep, seen = [], set()
    for r in range(E.shape[0]):
        idx = np.flatnonzero(tight[:, r])
        if len(idx) < n:
            continue
        key = tuple(idx)
        if key in seen:
            continue
        if affine_dimension(V[idx]) == n - 1:
            seen.add(key)
            keep.append(r)
    return np.asarray(keep, int)


def intersect(p: Polytope, q: Polytope) -> Polytope:
    """Intersection with redundant rows removed; check ``.dim`` / ``.is_empty``."""
    if p.n != q.n:
        raise ValueError("ambient dimensions differ")
    E = np.vstack([p.E, q.E])
    e = np.concatenate([p.e, q.e])
    V = _extreme_points(E, e)
    if affine_dimension(V) == p.n:
        rows = _facet_rows(E, e, V)
        return Polytope(E[rows], e[rows], V)
    # lower-dimensional or empty: keep every distinct row
    _, first = np.unique(np.round(np.hstack([E, e[:, None]]), 12), axis=0, return_index=True)
    first = np.sort(first)
    return Polytope(E[first], e[first], V)


def triangulate(p: Polytope):
    """Pulling triangulation from the lexicographically smallest vertex.

    Uses a global (coordinate) vertex order, so adjacent cells triangulate a
    shared face the same way. In 2-D this is a fan from the first vertex.
    """
    V = p.vertices
    n = p.n
    if not p.is_full_dim:
        return []
    if len(V) == n + 1:
        return [p if p._vertices is not None else Polytope.simplex(V)]
    order = np.lexsort(np.round(V, 9).T[::-1])
    V = V[order]
    rows = _facet_rows(p.E, p.e, V)
    tight = np.abs(V @ p.E[rows].T + p.e[rows]) <= TOL_GEOM
    faces = [frozenset(np.flatnonzero(tight[:, k])) for k in range(len(rows))]

    def pull(G, d):
        G = sorted(G)
        if len(G) == d + 1:
            return [tuple(G)]
        apex = G[0]
        out = []
        sub_seen = set()
        for F in faces:
            sub = frozenset(G) & F
            if apex in sub or sub in sub_seen or len(sub) < d:
                continue
            if affine_dimension(V[sorted(sub)]) != d - 1:
                continue
            sub_seen.add(sub)
            out += [(apex,) + s for s in pull(sub, d - 1)]
        return out

    return [Polytope.simplex(V[list(s)]) for s in pull(range(len(V)), n)]


# -- partitions ---------------------------------------------------------------


@dataclass(frozen=True)
class VertexRegistry:
    points: np.ndarray  # (V, n)
    cell_vertices: list  # per cell: array of registry ids

    @cached_property
    def vertex_cells(self):
        out = [[] for _ in range(len(self.points))]
        for i, ids in enumerate(self.cell_vertices):
            for k in ids:
                out[k].append(i)
        return out


@dataclass(frozen=True)
class IndexSets:
    boundary_pairs: list
    interior_pairs: list
    boundary_cells: list
    on_boundary: np.ndarray  # per registry vertex

    @property
    def interior_cells(self):
        return sorted({i for i, _ in self.interior_pairs})


class _Locator:
    """Uniform bucket grid over the domain bounding box for point location."""

    def __init__(self, cells, lo, hi):
        n = len(lo)
        N = len(cells)
        self.lo = lo
        self.span = np.where(hi - lo > 0, hi - lo, 1.0)
        self.G = max(1, int(math.ceil(N ** (1.0 / n))))
        rmax = max(len(c.e) for c in cells)
        self.E = np.zeros((N, rmax, n))
        self.e = np.ones((N, rmax))
        for i, c in enumerate(cells):
            self.E[i, :len(c.e)] = c.E
            self.e[i, :len(c.e)] = c.e
        buckets = {}
        for i, c in enumerate(cells):
            blo, bhi = c.bbox
            a = self._bucket(blo - TOL_GEOM)
            b = self._bucket(bhi + TOL_GEOM)
            for key in itertools.product(*[range(x, y + 1) for x, y in zip(a, b)]):
                buckets.setdefault(key, []).append(i)
        K = max(len(v) for v in buckets.values())
        self.table = -np.ones((self.G,) * n + (K,), int)
        for key, ids in buckets.items():
            self.table[key][:len(ids)] = ids

    def _bucket(self, X):
        b = np.floor((np.asarray(X) - self.lo) / self.span * self.G).astype(int)
        return np.clip(b, 0, self.G - 1)

    def best(self, X):
        """(cell index, min row residual) of the most interior candidate cell per point."""
        X = np.atleast_2d(X)
        out_i = np.empty(len(X), int)
        out_r = np.empty(len(X))
        for s in range(0, len(X), 20000):
            Xs = X[s:s + 20000]
            cand = self.table[tuple(self._bucket(Xs).T)]  # (P, K)
            safe = np.maximum(cand, 0)
            res = np.einsum("pkrn,pn->pkr", self.E[safe], Xs) + self.e[safe]
            mres = res.min(axis=2)
            mres[cand < 0] = -np.inf
            j = np.argmax(mres, axis=1)
            out_i[s:s + 20000] = cand[np.arange(len(Xs)), j]
            out_r[s:s + 20000] = mres[np.arange(len(Xs)), j]
        return out_i, out_r

    def containing(self, x, tol=TOL_GEOM):
        cand = self.table[tuple(self._bucket(x))]
        cand = cand[cand >= 0]
        res = (np.einsum("krn,n->kr", self.E[cand], x) + self.e[cand]).min(axis=1)
        return cand[res >= -tol]


class Partition:
    """Cells with pairwise disjoint interiors covering ``domain``."""

    def __init__(self, cells, domain: Polytope):
        self.cells = list(cells)
        self.domain = domain
        if not self.cells:
            raise ValueError("partition has no cells")

    def __len__(self):
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def __getitem__(self, i):
        return self.cells[i]

    @property
    def n(self):
        return self.domain.n

    @cached_property
    def registry(self) -> VertexRegistry:
        counts = [len(c.vertices) for c in self.cells]
        pts, inv = dedupe_points(np.vstack([c.vertices for c in self.cells]))
        ids = np.split(inv, np.cumsum(counts)[:-1])
        return VertexRegistry(pts, ids)

    @cached_property
    def _locator(self):
        lo, hi = self.domain.bbox
        return _Locator(self.cells, lo, hi)

    @property
    def is_simplicial(self):
        return all(len(c.vertices) == self.n + 1 for c in self.cells)

    @cached_property
    def volume(self):
        return float(sum(c.volume for c in self.cells))

    def locate(self, X, tol=TOL_GEOM):
        """Index of a cell containing each point, or -1 outside every cell."""
        idx, res = self._locator.best(np.asarray(X, float))
        return np.where(res >= -tol, idx, -1)

    def nearest(self, X):
        """Cell index per point, allowing points slightly outside (used by integrators)."""
        return self._locator.best(np.asarray(X, float))[0]

    def cells_containing(self, x, tol=TOL_GEOM):
        return self._locator.containing(np.asarray(x, float), tol)

    def parents_in(self, coarse: "Partition", tol=TOL_GEOM):
        """For each cell, the index of the coarse cell that contains it.

        Raises PartitionMismatch if some cell is not inside a single coarse cell.
        """
        cents = np.array([c.centroid for c in self.cells])
        par = coarse.locate(cents, tol)
        for i, (c, j) in enumerate(zip(self.cells, par)):
            if j < 0 or not np.all(coarse.cells[j].contains(c.vertices, tol)):
                raise PartitionMismatch(f"cell {i} is not contained in a single cell of the coarser partition")
        return par

    def refines(self, coarse: "Partition", tol=TOL_GEOM):
        try:
            self.parents_in(coarse, tol)
        except PartitionMismatch:
            return False
        return True

    def is_conforming(self, tol=TOL_GEOM):
        reg = self.registry
        for k, v in enumerate(reg.points):
            geo = set(self.cells_containing(v, tol).tolist())
            if geo != set(reg.vertex_cells[k]):
                return False
        return True

    def triangulated(self) -> "Partition":
        if self.is_simplicial:
            return self
        return Partition([s for c in self.cells for s in triangulate(c)], self.domain)

    def triangulation_map(self):
        """(simplicial partition, parent cell index per simplex)."""
        simp, parent = [], []
        for i, c in enumerate(self.cells):
            for s in triangulate(c):
                simp.append(s)
                parent.append(i)
        return Partition(simp, self.domain), np.asarray(parent, int)


def same_domain(a: Polytope, b: Polytope, tol=TOL_GEOM):
    Va, Vb = a.vertices, b.vertices
    if len(Va) != len(Vb):
        return False
    return all(np.min(np.max(np.abs(Vb - v), axis=1)) <= tol for v in Va)


def grid_partition(domain: Polytope, divisions, pattern="alternate") -> Partition:
    """Triangulated uniform grid over a box domain.

    ``pattern`` is "alternate" (diagonals flip in a checkerboard so the grid
    centre sees symmetric cells) or "cross" (each square split into four
    triangles through its centre).
    """
    lo, hi = domain.bbox
    if domain.n != 2:
        return _grid_kuhn(domain, divisions)
    nx, ny = (divisions, divisions) if np.isscalar(divisions) else divisions
    xs = np.linspace(lo[0], hi[0], nx + 1)
    ys = np.linspace(lo[1], hi[1], ny + 1)
    cells = []
    for i in range(nx):
        for j in range(ny):
            a = (xs[i], ys[j])
            b = (xs[i + 1], ys[j])
            c = (xs[i + 1], ys[j + 1])
            d = (xs[i], ys[j + 1])
            if pattern == "cross":
                m = ((xs[i] + xs[i + 1]) / 2, (ys[j] + ys[j + 1]) / 2)
                cells += [Polytope.simplex([a, b, m]), Polytope.simplex([b, c, m]),
                          Polytope.simplex([c, d, m]), Polytope.simplex([d, a, m])]
            elif (i + j) % 2 == 0:
                cells += [Polytope.simplex([a, b, c]), Polytope.simplex([a, c, d])]
            else:
                cells += [Polytope.simplex([a, b, d]), Polytope.simplex([b, c, d])]
    return Partition(cells, domain)


def _grid_kuhn(domain, divisions):
    lo, hi = domain.bbox
    n = domain.n
    k = int(divisions)
    h = (hi - lo) / k
    cells = []
    for idx in itertools.product(range(k), repeat=n):
        base = lo + np.asarray(idx) * h
        for perm in itertools.permutations(range(n)):
            pts = [base.copy()]
            for ax in perm:
                nxt = pts[-1].copy()
                nxt[ax] += h[ax]
                pts.append(nxt)
            cells.append(Polytope.simplex(pts))
    return Partition(cells, domain)


def product_partition(ps) -> Partition:
    """Common refinement: all full-dimensional intersections of one cell from each input."""
    ps = list(ps)
    if not ps:
        raise ValueError("need at least one partition")
    out = ps[0]
    for q in ps[1:]:
        if not same_domain(out.domain, q.domain):
            raise DomainMismatch("partitions cover different domains")
        out = _product2(out, q)
    return out


def overlapping_pairs(p: Partition, q: Partition, tol=TOL_GEOM):
    plo = np.array([c.bbox[0] for c in p.cells])
    phi = np.array([c.bbox[1] for c in p.cells])
    qlo = np.array([c.bbox[0] for c in q.cells])
    qhi = np.array([c.bbox[1] for c in q.cells])
    pairs = []
    for s in range(0, len(p), 512):
        ov = np.all((plo[s:s + 512, None] < qhi[None] - tol) & (qlo[None] < phi[s:s + 512, None] - tol), axis=2)
        i, j = np.nonzero(ov)
        pairs.append(np.stack([i + s, j], axis=1))
    return np.concatenate(pairs)


def _product2(p, q):
    cells = []
    for i, j in overlapping_pairs(p, q):
        a, b = p.cells[i], q.cells[j]
        # nested cells are common between refinements of one grid; skip the clipping
        if np.all(b.contains(a.vertices)):
            cells.append(a)
            continue
        if np.all(a.contains(b.vertices)):
            cells.append(b)
            continue
        c = intersect(a, b)
        if c.is_full_dim:
            cells.append(c)
    return Partition(cells, p.domain)


# -- refinement ---------------------------------------------------------------


def _edge_key(P, a, b):
    pa, pb = np.asarray(P[a]), np.asarray(P[b])
    lo, hi = (pa, pb) if tuple(pa) <= tuple(pb) else (pb, pa)
    return (round(float(np.sum((pa - pb) ** 2)), 10), tuple(np.round(lo, 9)), tuple(np.round(hi, 9)))


def refine_cells(part: Partition, flagged) -> Partition:
    """Longest-edge bisection of the flagged simplices, with conformity closure.

    A flagged simplex is split at the midpoint of its longest edge. Every
    other simplex sharing that edge is split too, after first being refined
    along its own longest edge when that edge is longer (Rivara's
    propagation), so no hanging vertices are left behind.
    """
    flagged = sorted(set(int(i) for i in flagged))
    if not flagged:
        return part
    if not part.is_simplicial:
        raise NotSimplicial("refine_cells needs a simplicial partition")
    n = part.n
    if any(i < 0 or i >= len(part) for i in flagged):
        raise IndexError("flagged cell index out of range")

    reg = part.registry
    P = [p for p in reg.points]
    simplices = {i: tuple(sorted(int(k) for k in ids)) for i, ids in enumerate(reg.cell_vertices)}
    next_id = len(simplices)
    edge_map = {}
    for sid, s in simplices.items():
        for a, b in itertools.combinations(s, 2):
            edge_map.setdefault((a, b), set()).add(sid)
    midpoints = {}
    children = {}

    def longest(s):
        return max(itertools.combinations(s, 2), key=lambda ab: _edge_key(P, *ab))

    def bisect_edge(edge):
        nonlocal next_id
        a, b = edge
        if edge not in midpoints:
            midpoints[edge] = len(P)
            P.append((P[a] + P[b]) / 2)
        m = midpoints[edge]
        for sid in sorted(edge_map.pop(edge, ())):
            s = simplices.pop(sid)
            for x, y in itertools.combinations(s, 2):
                if (x, y) != edge:
                    edge_map[(x, y)].discard(sid)
            kids = []
            for drop in (a, b):
                t = tuple(sorted([v for v in s if v != drop] + [m]))
                simplices[next_id] = t
                for x, y in itertools.combinations(t, 2):
                    edge_map.setdefault((x, y), set()).add(next_id)
                kids.append(next_id)
                next_id += 1
            children[sid] = kids

    def refine(sid, depth=0):
        if depth > 10_000:
            raise RuntimeError("refinement propagation did not terminate")
        while sid in simplices:
            e = longest(simplices[sid])
            bad = [t for t in sorted(edge_map.get(e, ())) if longest(simplices[t]) != e]
            if bad:
                refine(bad[0], depth + 1)
                continue
            bisect_edge(e)

    for sid in flagged:
        refine(sid)

    Pa = np.asarray(P)
    cells = [Polytope.simplex(Pa[list(s)]) for _, s in sorted(simplices.items())]
    return Partition(cells, part.domain)


def uniform_refine(part: Partition) -> Partition:
    return refine_cells(part, range(len(part)))


def build_index_sets(part: Partition, tol=TOL_GEOM) -> IndexSets:
    """Classify each (cell, vertex) incidence as on the domain boundary or interior."""
    reg = part.registry
    dom = part.domain
    on_b = np.min(reg.points @ dom.E.T + dom.e, axis=1) <= tol
    bpairs, ipairs = [], []
    bcells = []
    for i, ids in enumerate(reg.cell_vertices):
        hit = False
        for k in ids:
            if on_b[k]:
                bpairs.append((i, int(k)))
                hit = True
            else:
                ipairs.append((i, int(k)))
        if hit:
            bcells.append(i)
    return IndexSets(bpairs, ipairs, bcells, on_b)
