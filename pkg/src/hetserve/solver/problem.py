"""Dense array form of a planning instance and the fixed-activation assignment LP."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..catalog import Availability, budget_limit
from ..configspace import Configuration
from ..lp import solve_lp
from ..workload import DemandMatrix
from .plan import InfeasibleError, Plan

RTOL = 1e-9


@dataclass
class Problem:
    configs: list[Configuration]  # branching order: descending cost, then model and id
    keys: list[tuple[str, int]]  # demanded (model, workload id), f > 0
    f: np.ndarray  # (J,) request counts
    R: np.ndarray  # (K, J) rates, 0 where a config cannot serve a class
    cost: np.ndarray  # (K,)
    types: list[str]
    usage: np.ndarray  # (K, N) GPUs of each type per copy
    avail: np.ndarray  # (N,)
    budget: float  # math.inf when unconstrained
    hi: np.ndarray  # (K,) copy bound from budget and availability alone

    @property
    def K(self) -> int:
        return len(self.configs)

    @property
    def J(self) -> int:
        return len(self.keys)

    def affordable(self, y) -> bool:
        y = np.asarray(y)
        if self.cost @ y > self.budget * (1 + RTOL):
            return False
        return bool((self.usage.T @ y <= self.avail).all())

    def order_key(self, y) -> tuple:
        """Tie-breaking key among equal-makespan vectors: cost, GPUs, lexicographic y."""
        y = np.asarray(y)
        canon = sorted(range(self.K), key=lambda k: self.configs[k].key)
        return (float(self.cost @ y), int(self.usage.sum(axis=1) @ y), tuple(int(y[k]) for k in canon))


def _copy_bound(cost, use, avail, budget) -> int:
    b = math.floor(budget / cost * (1 + RTOL)) if math.isfinite(budget) else math.inf
    for n, d in zip(avail, use):
        if d > 0:
            b = min(b, int(n // d))
    if b == math.inf:
        raise ValueError("copy count unbounded: give a finite budget or availability")
    return int(b)


def build_problem(configs: Sequence[Configuration], table, demand: DemandMatrix, budget,
                  availability: Availability) -> Problem:
    """Array form; raises InfeasibleError when some demanded class cannot be served at all."""
    keys = sorted(demand.positive())
    if not keys:
        raise ValueError("demand matrix has no positive entry")
    B = math.inf if budget is None else budget_limit(budget)
    if not configs:
        raise InfeasibleError("memory", "no configuration fits the model in memory")
    cfgs = sorted(configs, key=lambda c: (-c.cost, c.model, c.id))
    R = np.array([[table.rate(m, c.id, w) or 0.0 if c.model == m else 0.0 for (m, w) in keys]
                  for c in cfgs])
    for j, key in enumerate(keys):
        if not (R[:, j] > 0).any():
            models = {c.model for c in cfgs}
            cause = "memory" if key[0] not in models else "unservable"
            raise InfeasibleError(cause, f"no configuration can serve model {key[0]!r} workload {key[1]}")
    useful = (R > 0).any(axis=1)
    cfgs = [c for c, u in zip(cfgs, useful) if u]
    R = R[useful]
    types = sorted({t for c in cfgs for t in c.gpu_counts})
    usage = np.array([[c.gpu_counts.get(t, 0) for t in types] for c in cfgs], dtype=float).reshape(len(cfgs), -1)
    avail = np.array([availability[t] for t in types], dtype=float)
    cost = np.array([c.cost for c in cfgs])
    hi = np.array([_copy_bound(o, u, avail, B) for o, u in zip(cost, usage)], dtype=int)
    for j, key in enumerate(keys):
        if not ((R[:, j] > 0) & (hi > 0)).any():
            over_budget = all(cost[k] > B * (1 + RTOL) for k in np.flatnonzero(R[:, j] > 0))
            if over_budget:
                raise InfeasibleError(
                    "budget", f"budget below cheapest feasible configuration for model {key[0]!r} "
                              f"workload {key[1]} ({cost[R[:, j] > 0].min():g} $/h > {B:g} $/h)")
            raise InfeasibleError("availability",
                                  f"availability too low for any configuration serving {key}")
    return Problem(cfgs, keys, np.array([demand[k] for k in keys], dtype=float), R, cost,
                   types, usage, avail, B, hi)


# -- fixed-activation assignment ------------------------------------------------

def assign_lp(R: np.ndarray, f: np.ndarray, y: np.ndarray):
    """Optimal x for fixed copies y: min T s.t. sum_k x_kj = 1, sum_j x f/(y R) <= T.

    Returns (x (K,J), T) or None when some class has no active server.
    Demand is normalised internally so the LP is scale free.
    """
    K, J = R.shape
    act = (y > 0)[:, None] & (R > 0)
    if not act.any(axis=0).all():
        return None
    scale = f.sum()
    fn = f / scale
    pairs = np.argwhere(act)
    nv = len(pairs) + 1
    c = np.zeros(nv)
    c[-1] = 1.0
    A_eq = np.zeros((J, nv))
    A_eq[pairs[:, 1], np.arange(len(pairs))] = 1.0
    rows = np.flatnonzero(y > 0)
    ridx = {k: i for i, k in enumerate(rows)}
    A_ub = np.zeros((len(rows), nv))
    for v, (k, j) in enumerate(pairs):
        A_ub[ridx[k], v] = fn[j] / (y[k] * R[k, j])
    A_ub[:, -1] = -1.0
    res = solve_lp(c, A_ub, np.zeros(len(rows)), A_eq, np.ones(J))
    if not res.ok:
        raise RuntimeError(f"assignment LP failed: {res.status}")
    x = np.zeros((K, J))
    x[pairs[:, 0], pairs[:, 1]] = res.x[:-1]
    x[x < 1e-12] = 0.0
    x /= x.sum(axis=0, keepdims=True)
    return x, makespan_of(R, f, y, x)


def makespan_of(R, f, y, x) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        load = np.where(x > 0, x * f[None, :] / (np.maximum(y, 1)[:, None] * np.where(R > 0, R, 1)), 0.0)
    return float(load.sum(axis=1).max())


def proportional_x(R, y) -> np.ndarray:
    cap = y[:, None] * R
    tot = cap.sum(axis=0, keepdims=True)
    if (tot <= 0).any():
        return None
    return cap / tot


def to_plan(p: Problem, y, x, T: float, solver: dict | None = None) -> Plan:
    act, asg, usage = {}, {}, {}
    for k, c in enumerate(p.configs):
        if y[k] <= 0:
            continue
        act[c.key] = int(y[k])
        for t, n in c.gpu_counts.items():
            usage[t] = usage.get(t, 0) + n * int(y[k])
        for j, (m, w) in enumerate(p.keys):
            if x[k, j] > 0:
                asg[(m, c.id, w)] = float(x[k, j])
    return Plan(act, asg, float(T), float(p.cost @ y), usage, dict(solver or {}))


def _active_problem(active, table, demand):
    configs = [c for c, _ in active]
    p = build_problem(configs, table, demand, None, _loose(configs, active))
    y = np.array([dict((c.key, n) for c, n in active).get(c.key, 0) for c in p.configs])
    return p, y


def _loose(configs, active):
    need: dict[str, int] = {}
    for c, n in active:
        for t, d in c.gpu_counts.items():
            need[t] = need.get(t, 0) + d * max(int(n), 1)
    return Availability(need)


def _raise_unservable(p: Problem, y):
    for j, key in enumerate(p.keys):
        if not ((y > 0) & (p.R[:, j] > 0)).any():
            raise InfeasibleError("unservable", f"no active configuration serves model {key[0]!r} "
                                                f"workload {key[1]}")


def inner_assign(active: Sequence[tuple[Configuration, int]], table, demand: DemandMatrix):
    """Optimal fractional assignment for fixed activation counts.

    Returns ``(assignment, makespan)`` with assignment keyed by
    (model, config id, workload id).
    """
    p, y = _active_problem(active, table, demand)
    _raise_unservable(p, y)
    x, T = assign_lp(p.R, p.f, y)
    plan = to_plan(p, y, x, T)
    return plan.assignment, T


def proportional_assign(active: Sequence[tuple[Configuration, int]], table, demand: DemandMatrix):
    """x_{c,w} proportional to y_c * h_{c,w}; returns ``(assignment, makespan)``."""
    p, y = _active_problem(active, table, demand)
    _raise_unservable(p, y)
    x = proportional_x(p.R, y)
    T = makespan_of(p.R, p.f, y, x)
    plan = to_plan(p, y, x, T)
    return plan.assignment, T
