"""Branch and bound over activation counts.

Node relaxation (continuous y within node bounds), with s = 1/T and
z_kj = x_kj * s after normalising demand to sum to one::

    maximize    s
    subject to  sum_k z_kj = s                       for every class j
                sum_j (f_j / R_kj) z_kj <= y_k         for every config k
                sum_k o_k y_k <= B,  sum_k d_nk y_k <= a_n
                lo_k <= y_k <= hi_k

Its optimum gives the lower bound T >= 1/s for every integer vector in the
node.  The same node LPs serve both the exact search and the feasibility
checks of the binary search, so they are cached by node bounds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ..lp import solve_lp
from .problem import RTOL, Problem, assign_lp

INT_TOL = 1e-6


@dataclass
class NodeResult:
    s: float  # relaxation optimum of 1/T (normalised demand)
    y: np.ndarray  # relaxation copies

    def lower_bound(self, total: float) -> float:
        return total / self.s if self.s > 0 else math.inf


@dataclass
class Candidate:
    y: np.ndarray
    x: np.ndarray
    T: float
    key: tuple


class Search:
    """Shared state for one instance: LP caches, counters and the incumbent."""

    def __init__(self, p: Problem, deadline: float = math.inf):
        self.p = p
        self.deadline = deadline
        self.total = float(p.f.sum())
        self.fn = p.f / self.total
        self.node_cache: dict[bytes, NodeResult | None] = {}
        self.assign_cache: dict[tuple, tuple | None] = {}
        self.node_solves = 0
        self.assign_solves = 0
        self.timed_out = False
        self.pairs = np.argwhere(p.R > 0)
        self.budget_row = p.cost / p.budget if math.isfinite(p.budget) else None

    @property
    def lp_solves(self) -> int:
        return self.node_solves + self.assign_solves

    def expired(self) -> bool:
        if time.perf_counter() > self.deadline:
            self.timed_out = True
        return self.timed_out

    # -- LPs ------------------------------------------------------------------

    def node(self, lo: np.ndarray, hi: np.ndarray) -> NodeResult | None:
        key = lo.tobytes() + hi.tobytes()
        if key not in self.node_cache:
            self.node_cache[key] = self._solve_node(lo, hi)
        return self.node_cache[key]

    def _solve_node(self, lo, hi) -> NodeResult | None:
        p = self.p
        self.node_solves += 1
        if not p.affordable(lo):
            return None
        free = np.flatnonzero(hi > lo)
        pairs = self.pairs[hi[self.pairs[:, 0]] > 0]
        ny, nz = len(free), len(pairs)
        nv = ny + nz + 1
        ycol = {k: i for i, k in enumerate(free)}
        c = np.zeros(nv)
        c[-1] = -1.0

        A_eq = np.zeros((p.J, nv))
        A_eq[pairs[:, 1], ny + np.arange(nz)] = 1.0
        A_eq[:, -1] = -1.0
        b_eq = np.zeros(p.J)

        rows, rhs = [], []
        cap = np.zeros((p.K, nv))
        cap[pairs[:, 0], ny + np.arange(nz)] = self.fn[pairs[:, 1]] / p.R[pairs[:, 0], pairs[:, 1]]
        for k, i in ycol.items():
            cap[k, i] = -1.0
        used = np.flatnonzero(hi > 0)
        rows.append(cap[used])
        rhs.append(lo[used].astype(float))
        if ny:
            bnd = np.zeros((ny, nv))
            bnd[np.arange(ny), np.arange(ny)] = 1.0
            rows.append(bnd)
            rhs.append((hi[free] - lo[free]).astype(float))
            if self.budget_row is not None:
                row = np.zeros((1, nv))
                row[0, :ny] = self.budget_row[free]
                rows.append(row)
                rhs.append(np.array([1.0 - self.budget_row @ lo]))
            U = p.usage[free].T  # (N, ny)
            need = U.any(axis=1)
            if need.any():
                A = np.zeros((int(need.sum()), nv))
                A[:, :ny] = U[need]
                rows.append(A)
                rhs.append(p.avail[need] - p.usage.T[need] @ lo)
        A_ub = np.vstack(rows)
        b_ub = np.concatenate(rhs)
        if (b_ub < -1e-9).any():
            return None
        res = solve_lp(c, A_ub, np.maximum(b_ub, 0.0), A_eq, b_eq)
        if not res.ok or res.x[-1] <= 1e-12:
            return None
        y = lo.astype(float)
        y[free] += res.x[:ny]
        return NodeResult(float(res.x[-1]), y)

    def assign(self, y: np.ndarray):
        """(x, T) for integer copies ``y``, or None when some class is unserved."""
        key = tuple(int(v) for v in y)
        if key not in self.assign_cache:
            self.assign_solves += 1
            self.assign_cache[key] = assign_lp(self.p.R, self.p.f, np.asarray(key, dtype=float))
        return self.assign_cache[key]

    # -- candidates -------------------------------------------------------------

    def candidate(self, y: np.ndarray, trim: bool = True) -> Candidate | None:
        y = np.asarray(y, dtype=int)
        if not self.p.affordable(y):
            return None
        r = self.assign(y)
        if r is None:
            return None
        x, T = r
        if trim:
            y, x, T = self._trim(y, x, T)
        return Candidate(y, x, T, self.p.order_key(y))

    def _trim(self, y, x, T):
        """Drop copies that do not lower the makespan (cheapest equivalent vector)."""
        y = y.copy()
        for k in range(self.p.K):
            while y[k] > 0:
                y2 = y.copy()
                y2[k] -= 1
                r = self.assign(y2)
                if r is None or r[1] > T * (1 + RTOL):
                    break
                y, (x, T) = y2, r
        return y, x, T

    @staticmethod
    def better(a: Candidate, b: Candidate | None) -> bool:
        if b is None:
            return True
        if a.T < b.T * (1 - RTOL):
            return True
        return a.T <= b.T * (1 + RTOL) and a.key < b.key

    # -- tree -----------------------------------------------------------------

    def root(self):
        lo = np.zeros(self.p.K, dtype=int)
        return lo, self.p.hi.astype(int).copy()

    @staticmethod
    def branch_var(y: np.ndarray) -> int | None:
        frac = np.abs(y - np.round(y)) > INT_TOL
        idx = np.flatnonzero(frac)
        return int(idx[0]) if idx.size else None

    def children(self, lo, hi, y, k):
        """Both children of branching on y_k; the one nearer the LP value last (popped first)."""
        v = y[k]
        down_hi = hi.copy()
        down_hi[k] = math.floor(v)
        up_lo = lo.copy()
        up_lo[k] = math.ceil(v)
        down, up = (lo, down_hi), (up_lo, hi)
        return [down, up] if v - math.floor(v) >= 0.5 else [up, down]

    def solve_exact(self, incumbent: Candidate | None = None, lb_stop: float | None = None):
        """Exact minimum makespan.  Returns (best candidate or None, gap, lower bound)."""
        best = incumbent
        lo, hi = self.root()
        root = self.node(lo, hi)
        if root is None:
            return best, 0.0, math.inf
        root_lb = root.lower_bound(self.total)
        c = self.candidate(np.ceil(root.y - INT_TOL))
        if c is not None and self.better(c, best):
            best = c
        stack = [(lo, hi, root_lb)]
        while stack:
            if lb_stop is not None and best is not None and best.T <= lb_stop:
                break
            if self.expired():
                break
            lo, hi, _ = stack.pop()
            nr = self.node(lo, hi)
            if nr is None:
                continue
            lb = nr.lower_bound(self.total)
            if best is not None and lb > best.T * (1 + RTOL):
                continue
            k = self.branch_var(nr.y)
            if k is None:
                c = self.candidate(np.round(nr.y))
                if c is not None and self.better(c, best):
                    best = c
                continue
            for clo, chi in self.children(lo, hi, nr.y, k):
                stack.append((clo, chi, lb))
        if stack and best is not None:
            open_lb = min(s[2] for s in stack)
            gap = max(0.0, (best.T - open_lb) / best.T)
            return best, gap, min(open_lb, best.T)
        return best, 0.0, (best.T if best is not None else math.inf)

    def feasible(self, T_hat: float) -> Candidate | None:
        """Some integer vector with makespan <= T_hat, or None (exact decision)."""
        limit = T_hat * (1 + RTOL)
        stack = [self.root()]
        while stack:
            if self.expired():
                return None
            lo, hi = stack.pop()
            nr = self.node(lo, hi)
            if nr is None or nr.lower_bound(self.total) > limit:
                continue
            k = self.branch_var(nr.y)
            if k is None:
                c = self.candidate(np.round(nr.y), trim=False)
                if c is not None and c.T <= limit:
                    return c
                continue
            c = self.candidate(np.ceil(nr.y - INT_TOL), trim=False)
            if c is not None and c.T <= limit:
                return c
            stack.extend(self.children(lo, hi, nr.y, k))
        return None
