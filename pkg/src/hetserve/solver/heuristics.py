"""Makespan bounds, warm start and the greedy knapsack feasibility check."""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from .problem import RTOL, Problem
from .search import Candidate, Search


def bounds(p: Problem) -> tuple[float, float, np.ndarray | None]:
    """(T_lo, T_hi, y achieving T_hi or None).

    T_lo: for each class, every available GPU runs at the best per-GPU rate
    any configuration reaches on that class; budget ignored.
    T_hi: the cheapest single configuration that serves every class, at as
    many copies as budget and availability allow.  Infinite when no single
    configuration covers all classes.
    """
    per_gpu = p.R / p.usage.sum(axis=1, keepdims=True)  # (K, J)
    lo = 0.0
    for j in range(p.J):
        rho = np.zeros(len(p.types))
        for n in range(len(p.types)):
            uses = (p.usage[:, n] > 0) & (p.R[:, j] > 0)
            if uses.any():
                rho[n] = per_gpu[uses, j].max()
        H = float(p.avail @ rho)
        lo = max(lo, p.f[j] / H if H > 0 else math.inf)
    covers = np.flatnonzero((p.R > 0).all(axis=1) & (p.hi > 0))
    if covers.size == 0:
        return lo, math.inf, None
    k = int(min(covers, key=lambda k: (p.cost[k], p.configs[k].model, p.configs[k].id)))
    y = np.zeros(p.K, dtype=int)
    y[k] = p.hi[k]
    hi = float((p.f / (y[k] * p.R[k])).sum())
    return lo, hi, y


def warm_start_y(p: Problem, weights: Mapping[str, float] | None = None) -> np.ndarray | None:
    """Budget split across models by weight, cheapest covering config per model.

    ``weights`` defaults to demand totals; callers pass memory x demand.
    Returns an affordable vector serving every class, or None.
    """
    models = sorted({m for m, _ in p.keys})
    if weights is None:
        weights = {m: sum(f for (m2, _), f in zip(p.keys, p.f) if m2 == m) for m in models}
    wsum = sum(weights[m] for m in models)
    B = p.budget if math.isfinite(p.budget) else float(p.cost @ p.hi)
    y = np.zeros(p.K, dtype=int)
    left = p.avail.copy()
    spent = 0.0
    for m in models:
        cols = [j for j, (m2, _) in enumerate(p.keys) if m2 == m]
        covers = [k for k in range(p.K) if p.configs[k].model == m and (p.R[k, cols] > 0).all()]
        covers = [k for k in covers if (p.usage[k] <= left).all()]
        if not covers:
            return None
        k = min(covers, key=lambda k: (p.cost[k], p.configs[k].id))
        share = B * weights[m] / wsum
        n = math.floor(share / p.cost[k] * (1 + RTOL))
        for t in np.flatnonzero(p.usage[k] > 0):
            n = min(n, int(left[t] // p.usage[k, t]))
        if n == 0 and spent + p.cost[k] <= B * (1 + RTOL):
            n = 1
        if n == 0:
            return None
        y[k] = n
        spent += n * p.cost[k]
        left -= n * p.usage[k]
    return y if p.affordable(y) else None


def knapsack_feasible(search: Search, T_hat: float) -> Candidate | None:
    """Greedy capacity-per-dollar packing for makespan target ``T_hat``.

    One copy of config k finishes fraction phi_k = min(1, T_hat / sum_j r_j/R_kj)
    of the residual demand r.  Copies are taken by phi/cost while affordable;
    one swap-repair pass follows; the result is always verified with the
    exact assignment LP, so a returned candidate is truly feasible.
    """
    p = search.p
    limit = T_hat * (1 + RTOL)
    r = p.f.astype(float).copy()
    y = np.zeros(p.K, dtype=int)
    spent = 0.0
    left = p.avail.copy()
    order = []
    while r.max() > 1e-9 * p.f.max():
        with np.errstate(divide="ignore"):
            load = np.where(p.R > 0, r[None, :] / np.where(p.R > 0, p.R, 1), np.inf).sum(axis=1)
        phi = np.minimum(1.0, T_hat / load)
        ok = (spent + p.cost <= p.budget * (1 + RTOL)) & (p.usage <= left).all(axis=1) & (phi > 0)
        if not ok.any():
            break
        score = np.where(ok, phi / p.cost, -np.inf)
        k = int(score.argmax())
        y[k] += 1
        order.append(k)
        spent += p.cost[k]
        left -= p.usage[k]
        r = r * (1 - phi[k])
    if not y.any():
        return None
    best = search.candidate(y, trim=False)
    if best is not None and best.T <= limit:
        return best
    # swap-repair: replace each chosen copy by the config that most lowers the makespan
    for k in dict.fromkeys(order):
        base = y.copy()
        base[k] -= 1
        trial_best = best
        for k2 in range(p.K):
            if k2 == k:
                continue
            y2 = base.copy()
            y2[k2] += 1
            c = search.candidate(y2, trim=False)
            if c is not None and (trial_best is None or c.T < trial_best.T):
                trial_best = c
        if trial_best is not best:
            best, y = trial_best, trial_best.y.copy()
            if best.T <= limit:
                return best
    return best if best is not None and best.T <= limit else None
