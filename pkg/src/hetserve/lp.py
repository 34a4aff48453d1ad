"""Small dense linear programs.

The solver only ever needs LPs with a few dozen rows, where per-call
overhead dominates.  ``simplex`` is a two-phase tableau method for those;
``solve_lp`` routes anything large to HiGHS through scipy.

All problems have the form::

    minimize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                x >= 0
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

# dense tableau cells above this go to HiGHS
DENSE_LIMIT = 40_000


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None = None
    fun: float = np.nan
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _as_2d(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.asarray(A, dtype=float)
    return A.reshape(-1, n)


def _pivot(T: np.ndarray, r: int, j: int) -> None:
    prow = T[r] / T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= col[:, None] * prow
    T[r] = prow
    T[np.abs(T) < 1e-13] = 0.0


def _iterate(T, basis, ncols, tol, max_iter, it0):
    """Run primal simplex on tableau ``T`` (objective in the last row).

    Only the first ``ncols`` columns may enter.  Dantzig pricing, switching
    to Bland's rule after a run of degenerate pivots.
    """
    m = T.shape[0] - 1
    it = it0
    degenerate = 0
    bland_after = 2 * (m + 1)
    while it < max_iter:
        red = T[-1, :ncols]
        if degenerate > bland_after:
            cand = np.flatnonzero(red < -tol)
            if cand.size == 0:
                return OPTIMAL, it
            j = int(cand[0])
        else:
            j = int(red.argmin())
            if red[j] >= -tol:
                return OPTIMAL, it
        col = T[:m, j]
        pos = col > tol
        if not pos.any():
            return UNBOUNDED, it
        rhs = T[:m, -1]
        ratios = np.divide(rhs, col, out=np.full(m, np.inf), where=pos)
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        r = int(ties[0]) if ties.size == 1 else int(ties[basis[ties].argmin()])
        degenerate = degenerate + 1 if rhs[r] <= tol else 0
        _pivot(T, r, j)
        basis[r] = j
        it += 1
    raise RuntimeError("simplex iteration limit reached")


def simplex(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, tol=1e-9, max_iter=5000) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = _as_2d(A_ub, n)
    A_eq = _as_2d(A_eq, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # columns: originals | slacks | artificials | rhs
    n_slack = m_ub
    A = np.zeros((m, n + n_slack))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n:n + n_slack] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1.0
    b = np.where(neg, -b, b)

    needs_art = np.ones(m, dtype=bool)
    needs_art[:m_ub] = neg[:m_ub]
    art_rows = np.nonzero(needs_art)[0]
    n_art = art_rows.size
    width = n + n_slack + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, :n + n_slack] = A
    T[:m, -1] = b
    basis = np.empty(m, dtype=int)
    for i in range(m_ub):
        basis[i] = n + i
    for k, i in enumerate(art_rows):
        T[i, n + n_slack + k] = 1.0
        basis[i] = n + n_slack + k

    it = 0
    if n_art:
        T[-1, :] = 0.0
        T[-1, n + n_slack:width] = 1.0
        T[-1] -= T[art_rows].sum(axis=0)
        status, it = _iterate(T, basis, width, tol, max_iter, it)
        scale = max(1.0, float(np.abs(b).max(initial=0.0)))
        if -T[-1, -1] > tol * scale * 10:
            return LPResult(INFEASIBLE, iterations=it)
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= n + n_slack:
                row = T[r, :n + n_slack]
                cand = np.nonzero(np.abs(row) > tol)[0]
                if cand.size:
                    j = int(cand[np.argmax(np.abs(row[cand]))])
                    _pivot(T, r, j)
                    basis[r] = j
                else:
                    keep[r] = False
        if not keep.all():
            T = np.vstack([T[:m][keep], T[-1:]])
            basis = basis[keep]
            m = int(keep.sum())
        T = np.hstack([T[:, :n + n_slack], T[:, -1:]])
        width = n + n_slack

    T[-1, :] = 0.0
    T[-1, :n] = c
    for r in range(m):
        cb = T[-1, basis[r]]
        if cb != 0.0:
            T[-1] -= cb * T[r]
    status, it = _iterate(T, basis, width, tol, max_iter, it)
    if status != OPTIMAL:
        return LPResult(status, iterations=it)
    x = np.zeros(width)
    x[basis] = T[:m, -1]
    x = np.maximum(x[:n], 0.0)
    return LPResult(OPTIMAL, x, float(c @ x), it)


def highs(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None) -> LPResult:
    from scipy.optimize import linprog

    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs")
    if res.status == 0:
        return LPResult(OPTIMAL, np.maximum(res.x, 0.0), float(res.fun), int(res.nit))
    if res.status == 2:
        return LPResult(INFEASIBLE)
    if res.status == 3:
        return LPResult(UNBOUNDED)
    raise RuntimeError(f"HiGHS failed: {res.message}")


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None) -> LPResult:
    n = len(c)
    rows = (0 if A_ub is None else len(A_ub)) + (0 if A_eq is None else len(A_eq))
    if rows * (n + rows) > DENSE_LIMIT:
        return highs(c, A_ub, b_ub, A_eq, b_eq)
    return simplex(c, A_ub, b_ub, A_eq, b_eq)
