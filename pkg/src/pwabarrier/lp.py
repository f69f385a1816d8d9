"""Linear programs and a dense two-phase simplex solver.

Programs are stated as

    minimize    c @ x
    subject to  row_k @ x  (<=, ==, >=)  rhs_k
                lower <= x <= upper

with free variables by default. ``solve`` runs the in-house tableau simplex
(Bland's rule); ``method="highs"`` hands the same program to scipy's HiGHS
dual simplex, which is what the synthesis loop uses once programs reach a
few thousand rows.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailure

TOL_LP = 1e-9
MAX_ITER = 100_000

LE, EQ, GE = "<=", "==", ">="
_RELATIONS = (LE, EQ, GE)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class LinearProgram:
    num_vars: int
    objective: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None
    names: list = None
    _cols: list = field(default_factory=list, repr=False)
    _vals: list = field(default_factory=list, repr=False)
    relations: list = field(default_factory=list)
    rhs: list = field(default_factory=list)
    tags: list = field(default_factory=list)

    def __post_init__(self):
        n = self.num_vars
        self.objective = np.zeros(n) if self.objective is None else np.asarray(self.objective, float)
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if not (len(self.objective) == len(self.lower) == len(self.upper) == n):
            raise ValueError("objective and bounds must have length num_vars")

    def add_constraint(self, coeffs, relation, rhs, tag=""):
        """Append one row. ``coeffs`` is a dense vector or a {var: coef} mapping."""
        if relation not in _RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        if isinstance(coeffs, dict):
            cols = np.fromiter(coeffs.keys(), dtype=int, count=len(coeffs))
            vals = np.fromiter(coeffs.values(), dtype=float, count=len(coeffs))
        else:
            dense = np.asarray(coeffs, dtype=float)
            if dense.shape != (self.num_vars,):
                raise ValueError("coefficient vector must have length num_vars")
            cols = np.flatnonzero(dense)
            vals = dense[cols]
        if cols.size and (cols.min() < 0 or cols.max() >= self.num_vars):
            raise ValueError("variable index out of range")
        if not np.all(np.isfinite(vals)) or not np.isfinite(rhs):
            raise ValueError("non-finite coefficient")
        self._cols.append(cols)
        self._vals.append(vals)
        self.relations.append(relation)
        self.rhs.append(float(rhs))
        self.tags.append(tag)

    @property
    def num_constraints(self):
        return len(self.rhs)

    @property
    def constraints(self):
        """Rows as (dense coefficient vector, relation, rhs) triples."""
        out = []
        for cols, vals, rel, b in zip(self._cols, self._vals, self.relations, self.rhs):
            row = np.zeros(self.num_vars)
            np.add.at(row, cols, vals)
            out.append((row, rel, b))
        return out

    def count(self, tag):
        return sum(1 for t in self.tags if t == tag)

    def matrix(self, sparse=False):
        rows = np.repeat(np.arange(self.num_constraints), [len(c) for c in self._cols])
        cols = np.concatenate(self._cols) if self._cols else np.zeros(0, int)
        vals = np.concatenate(self._vals) if self._vals else np.zeros(0)
        shape = (self.num_constraints, self.num_vars)
        if sparse:
            import scipy.sparse as sp

            return sp.csr_matrix((vals, (rows, cols)), shape=shape)
        A = np.zeros(shape)
        np.add.at(A, (rows, cols), vals)
        return A

    def used_columns(self):
        used = np.zeros(self.num_vars, bool)
        for cols in self._cols:
            used[cols] = True
        return used


@dataclass
class LPSolution:
    status: Status
    values: np.ndarray = None
    objective_value: float = float("nan")
    iterations: int = 0

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL


def solve(lp: LinearProgram, method="simplex", tol=TOL_LP, max_iter=MAX_ITER) -> LPSolution:
    if method == "simplex":
        return _solve_simplex(lp, tol, max_iter)
    if method == "highs":
        return _solve_highs(lp)
    raise ValueError(f"unknown LP method {method!r}")


def constraint_violation(lp: LinearProgram, x):
    """Largest violation over rows and bounds (0 when feasible)."""
    x = np.asarray(x, float)
    worst = 0.0
    if lp.num_constraints:
        ax = lp.matrix(sparse=True) @ x
        b = np.asarray(lp.rhs)
        rel = np.asarray(lp.relations)
        viol = np.where(rel == LE, ax - b, np.where(rel == GE, b - ax, np.abs(ax - b)))
        worst = max(worst, float(viol.max(initial=0.0)))
    worst = max(worst, float(np.max(lp.lower - x, initial=0.0)), float(np.max(x - lp.upper, initial=0.0)))
    return worst


# -- in-house simplex -------------------------------------------------------


def _standard_form(lp):
    """Rewrite as min c'y, A y = b, y >= 0 with b >= 0.

    Returns (A, b, c, recover) where recover maps y back to x.
    """
    n = lp.num_vars
    A0 = lp.matrix()
    b0 = np.asarray(lp.rhs, float)
    rels = list(lp.relations)

    # column map: x_j = offset_j + sum(sign * y_col)
    col_src, col_sign = [], []
    offset = np.zeros(n)
    extra_rows = []
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            offset[j] = lo
            col_src.append(j)
            col_sign.append(1.0)
            if np.isfinite(hi):
                extra_rows.append((len(col_src) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            col_src.append(j)
            col_sign.append(-1.0)
        else:
            col_src += [j, j]
            col_sign += [1.0, -1.0]
    col_src = np.asarray(col_src, int)
    col_sign = np.asarray(col_sign)

    A = A0[:, col_src] * col_sign
    b = b0 - A0 @ offset
    ny = len(col_src)
    if extra_rows:
        B = np.zeros((len(extra_rows), ny))
        for r, (col, cap) in enumerate(extra_rows):
            B[r, col] = 1.0
        A = np.vstack([A, B])
        b = np.concatenate([b, [cap for _, cap in extra_rows]])
        rels = rels + [LE] * len(extra_rows)

    m = A.shape[0]
    n_slack = sum(r != EQ for r in rels)
    S = np.zeros((m, n_slack))
    k = 0
    for i, r in enumerate(rels):
        if r == LE:
            S[i, k] = 1.0
            k += 1
        elif r == GE:
            S[i, k] = -1.0
            k += 1
    A = np.hstack([A, S])
    c = np.concatenate([lp.objective[col_src] * col_sign, np.zeros(n_slack)])

    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    def recover(y):
        x = offset.copy()
        np.add.at(x, col_src, col_sign * y[:ny])
        return x

    return A, b, c, recover


def _pivot(T, r, j):
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run(T, basis, ncols, tol, max_iter, it):
    """Bland's-rule iterations on tableau T whose last row is the cost row."""
    m = T.shape[0] - 1
    while True:
        if it >= max_iter:
            raise NumericalFailure(f"simplex exceeded {max_iter} iterations")
        red = T[-1, :ncols]
        cand = np.flatnonzero(red < -tol)
        if cand.size == 0:
            return "optimal", it
        j = cand[0]
        col = T[:m, j]
        pos = np.flatnonzero(col > tol)
        if pos.size == 0:
            return "unbounded", it
        ratios = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + tol * max(1.0, abs(best))]
        r = ties[np.argmin(np.asarray(basis)[ties])]
        _pivot(T, r, j)
        basis[r] = j
        it += 1


def _solve_simplex(lp, tol, max_iter):
    A, b, c, recover = _standard_form(lp)
    m, n = A.shape
    if m == 0:
        if np.any(c < -tol):
            return LPSolution(Status.UNBOUNDED)
        x = recover(np.zeros(n))
        return LPSolution(Status.OPTIMAL, x, float(lp.objective @ x))

    # phase 1: artificial on every row keeps the bookkeeping uniform
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    _, it = _run(T, basis, n + m, tol, max_iter, 0)
    if -T[-1, -1] > tol * max(1.0, float(np.abs(b).max())):
        return LPSolution(Status.INFEASIBLE, iterations=it)

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= n:
            nz = np.flatnonzero(np.abs(T[r, :n]) > tol)
            if nz.size == 0:
                continue
            _pivot(T, r, nz[0])
            basis[r] = nz[0]
        keep.append(r)
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis = [basis[r] for r in keep]
    T2[-1, :n] = c
    for r, j in enumerate(basis):
        if T2[-1, j] != 0.0:
            T2[-1] -= T2[-1, j] * T2[r]
    status, it = _run(T2, basis, n, tol, max_iter, it)
    if status == "unbounded":
        return LPSolution(Status.UNBOUNDED, iterations=it)
    y = np.zeros(n)
    y[basis] = T2[:-1, -1]
    x = recover(y)
    return LPSolution(Status.OPTIMAL, x, float(lp.objective @ x), it)


# -- HiGHS backend -------------------------------------------------------------


def _solve_highs(lp):
    from scipy.optimize import linprog

    A = lp.matrix(sparse=True)
    b = np.asarray(lp.rhs, float)
    rel = np.asarray(lp.relations)
    le, ge, eq = rel == LE, rel == GE, rel == EQ
    import scipy.sparse as sp

    A_ub = sp.vstack([A[le], -A[ge]]).tocsr() if (le.any() or ge.any()) else None
    b_ub = np.concatenate([b[le], -b[ge]]) if A_ub is not None else None
    A_eq = A[eq] if eq.any() else None
    b_eq = b[eq] if eq.any() else None
    bounds = list(zip(np.where(np.isfinite(lp.lower), lp.lower, None),
                      np.where(np.isfinite(lp.upper), lp.upper, None)))
    for method in ("highs-ds", "highs-ipm", "highs"):
        res = linprog(lp.objective, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=bounds, method=method)
        if res.status in (0, 2, 3):
            break
    if res.status == 0:
        x = np.asarray(res.x, float)
        return LPSolution(Status.OPTIMAL, x, float(lp.objective @ x), int(res.nit))
    if res.status == 2:
        return LPSolution(Status.INFEASIBLE, iterations=int(res.nit))
    if res.status == 3:
        return LPSolution(Status.UNBOUNDED, iterations=int(res.nit))
    raise NumericalFailure(f"HiGHS: {res.message}")
