"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves  min c^T x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0.
Meant for small dense problems where a vertex solution and exact duals
are needed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-9


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible", "unbounded", "iteration_limit"
    x: np.ndarray | None
    fun: float
    ineq_duals: np.ndarray | None  # multipliers >= 0 for the <= rows
    eq_duals: np.ndarray | None
    basis: np.ndarray | None
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _pivot(T: np.ndarray, r: int, j: int):
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= col[:, None] * T[r]


def _simplex(T: np.ndarray, basis: np.ndarray, ncols: int, max_iter: int) -> tuple[str, int]:
    """Bland's rule on tableau T whose last row holds reduced costs and last column the rhs."""
    it = 0
    while it < max_iter:
        red = T[-1, :ncols]
        enter = np.flatnonzero(red < -TOL)
        if enter.size == 0:
            return "optimal", it
        j = int(enter[0])
        col = T[:-1, j]
        pos = col > TOL
        if not pos.any():
            return "unbounded", it
        ratios = np.full(col.shape, np.inf)
        ratios[pos] = T[:-1, -1][pos] / col[pos]
        rmin = ratios.min()
        ties = np.flatnonzero(ratios <= rmin + TOL * (1 + abs(rmin)))
        r = int(ties[np.argmin(basis[ties])])  # lowest basic index leaves
        _pivot(T, r, j)
        basis[r] = j
        it += 1
    return "iteration_limit", it


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, max_iter: int = 50_000) -> LPResult:
    c = np.asarray(c, dtype=float).reshape(-1)
    n = c.shape[0]
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # standard form: [A_ub I; A_eq 0] [x; s] = b, rows flipped so that b >= 0
    A = np.zeros((m, n + m_ub))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n:] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b = b * sign
    cost = np.concatenate([c, np.zeros(m_ub)])
    nv = n + m_ub

    # phase 1 with one artificial per row
    T = np.zeros((m + 1, nv + m + 1))
    T[:m, :nv] = A
    T[:m, nv:nv + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :nv] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = np.arange(nv, nv + m)
    status, it1 = _simplex(T, basis, nv + m, max_iter)
    if status == "iteration_limit":
        return LPResult(status, None, np.nan, None, None, None, it1)
    scale = 1.0 + float(np.max(np.abs(b))) if m else 1.0
    if -T[-1, -1] > 1e-8 * scale:
        return LPResult("infeasible", None, np.nan, None, None, None, it1)

    # drive artificials out; rows where that is impossible are redundant
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] >= nv:
            cand = np.flatnonzero(np.abs(T[r, :nv]) > TOL)
            if cand.size:
                _pivot(T, r, int(cand[0]))
                basis[r] = int(cand[0])
            else:
                keep[r] = False
    rows = np.flatnonzero(keep)
    T2 = np.zeros((rows.size + 1, nv + 1))
    T2[:-1, :nv] = T[rows, :nv]
    T2[:-1, -1] = T[rows, -1]
    basis = basis[rows].copy()
    T2[-1, :nv] = cost
    T2[-1, -1] = 0.0
    for r, j in enumerate(basis):
        T2[-1] -= cost[j] * T2[r]
    status, it2 = _simplex(T2, basis, nv, max_iter - it1)
    if status != "optimal":
        return LPResult(status, None, np.nan if status != "unbounded" else -np.inf, None, None, None, it1 + it2)

    xs = np.zeros(nv)
    xs[basis] = np.maximum(T2[:-1, -1], 0.0)
    x = xs[:n]
    # duals y solve B^T y = c_B on the kept (sign-flipped) rows
    B = A[rows][:, basis]
    y_rows = np.linalg.solve(B.T, cost[basis]) if rows.size else np.zeros(0)
    y = np.zeros(m)
    y[rows] = y_rows * sign[rows]
    ineq = np.maximum(-y[:m_ub], 0.0)  # min problem: multipliers of <= rows are -y
    return LPResult("optimal", x, float(c @ x), ineq, y[m_ub:], basis, it1 + it2)
