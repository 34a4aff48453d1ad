"""Public solver entry points working on configurations, tables and demand."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..catalog import Availability
from ..configspace import Configuration, prune_dominated
from ..workload import DemandMatrix
from .heuristics import bounds, knapsack_feasible, warm_start_y
from .plan import InfeasibleError, Plan, SolverOptions, plan_makespan
from .problem import Problem, assign_lp, build_problem, to_plan
from .search import Candidate, Search

LB_STOP_SLACK = 1e-3


def _prune(configs, table, demand):
    out = []
    by_model: dict[str, list] = {}
    for c in configs:
        by_model.setdefault(c.model, []).append(c)
    for m, cs in by_model.items():
        ws = [w for (m2, w) in demand.positive() if m2 == m]
        out.extend(prune_dominated(cs, table, ws) if ws else cs)
    return out


def _weights(p: Problem, models) -> dict[str, float] | None:
    if not models:
        return None
    if not isinstance(models, Mapping):
        models = {m.name: m for m in models}
    out = {}
    for m in {m for m, _ in p.keys}:
        dem = sum(f for (m2, _), f in zip(p.keys, p.f) if m2 == m)
        mem = models[m].min_replica_memory if m in models else 1.0
        out[m] = mem * dem
    return out


def _seed(p: Problem, search: Search, options: SolverOptions, models, incumbent) -> Candidate | None:
    best = None
    seeds = []
    if incumbent is not None:
        seeds.append(np.array([incumbent.get(c.key, 0) for c in p.configs], dtype=int))
    if options.enable_warm_start:
        y = warm_start_y(p, _weights(p, models))
        if y is not None:
            seeds.append(y)
    for y in seeds:
        c = search.candidate(y)
        if c is not None and search.better(c, best):
            best = c
    return best


def _diagnose(configs, table, demand, budget, availability):
    """Name the binding constraint of an infeasible instance."""
    if budget is not None:
        try:
            p = build_problem(configs, table, demand, None, availability)
            s = Search(p)
            if s.solve_exact()[0] is not None:
                return InfeasibleError("budget", "budget too small to serve every workload class at once")
        except InfeasibleError as e:
            return e
    return InfeasibleError("availability", "available GPUs cannot serve every workload class at once")


@dataclass
class _Setup:
    problem: Problem
    search: Search
    seed: Candidate | None
    t0: float


def _setup(configs, table, demand, budget, availability, options, models, incumbent) -> _Setup:
    t0 = time.perf_counter()
    configs = list(configs)
    if options.enable_pruning:
        configs = _prune(configs, table, demand)
    p = build_problem(configs, table, demand, budget, availability)
    search = Search(p, deadline=t0 + options.wall_clock_limit)
    return _Setup(p, search, _seed(p, search, options, models, incumbent), t0)


def _finish(st: _Setup, best: Candidate, mode, gap, lower) -> Plan:
    info = {"mode": mode, "gap": float(gap), "evaluated_nodes": st.search.lp_solves,
            "node_lps": st.search.node_solves, "assignment_lps": st.search.assign_solves,
            "wall_s": time.perf_counter() - st.t0, "lower_bound_s": float(lower),
            "status": "time_limit" if st.search.timed_out else "complete"}
    return to_plan(st.problem, best.y, best.x, best.T, info)


def solve_exact(configs: Sequence[Configuration], table, demand: DemandMatrix, budget,
                availability: Availability, options: SolverOptions = SolverOptions(),
                models=None, incumbent: Mapping[tuple[str, str], int] | None = None) -> Plan:
    """Optimal plan by branch and bound over activation counts."""
    st = _setup(configs, table, demand, budget, availability, options, models, incumbent)
    lb_stop = None
    if options.enable_lower_bound_stop:
        lb_stop = bounds(st.problem)[0] * (1 + LB_STOP_SLACK)
    best, gap, lower = st.search.solve_exact(st.seed, lb_stop)
    if best is None:
        if st.search.timed_out:
            raise TimeoutError("no feasible plan found within wall_clock_limit")
        raise _diagnose(configs, table, demand, budget, availability)
    return _finish(st, best, "exact", gap, lower)


def makespan_bounds(configs: Sequence[Configuration], table, demand: DemandMatrix,
                    availability: Availability, budget=None) -> tuple[float, float]:
    """Sound (T_lo, T_hi) with T_lo <= T* <= T_hi."""
    p = build_problem(list(configs), table, demand, budget, availability)
    lo, hi, _ = bounds(p)
    return lo, hi


def feasibility_check(T_hat: float, configs: Sequence[Configuration], table, demand: DemandMatrix,
                      budget, availability: Availability, mode: str = "exact_lp") -> Plan | None:
    """A plan with makespan <= T_hat, or None."""
    if not T_hat > 0:
        return None
    p = build_problem(list(configs), table, demand, budget, availability)
    search = Search(p)
    c = search.feasible(T_hat) if mode == "exact_lp" else knapsack_feasible(search, T_hat)
    if c is None:
        return None
    return to_plan(p, c.y, c.x, c.T, {"mode": f"feasibility:{mode}", "gap": 0.0,
                                      "evaluated_nodes": search.lp_solves, "wall_s": 0.0})


def binary_search_on_T(configs: Sequence[Configuration], table, demand: DemandMatrix, budget,
                       availability: Availability, options: SolverOptions = SolverOptions(mode="binary_search"),
                       models=None, incumbent: Mapping[tuple[str, str], int] | None = None) -> Plan:
    """Bisection on the makespan target with feasibility checks.

    The upper end always holds a verified plan and is lowered to that plan's
    achieved makespan, which is never above the tested target.
    """
    st = _setup(configs, table, demand, budget, availability, options, models, incumbent)
    p, search = st.problem, st.search
    T_lo, _, y_hi = bounds(p)
    root = search.node(*search.root())
    if root is None:
        raise _diagnose(configs, table, demand, budget, availability)
    T_lo = max(T_lo, root.lower_bound(search.total))
    best = st.seed
    if y_hi is not None:
        c = search.candidate(y_hi, trim=False)
        if c is not None and search.better(c, best):
            best = c
    if best is None:
        best = search.feasible(math.inf)
        if best is None:
            if search.timed_out:
                raise TimeoutError("no feasible plan found within wall_clock_limit")
            raise _diagnose(configs, table, demand, budget, availability)
    check = search.feasible if options.feasibility_mode == "exact_lp" else (
        lambda t: knapsack_feasible(search, t))
    T_hi = best.T
    T_lo = min(T_lo, T_hi)
    while T_hi - T_lo > options.tolerance and not search.expired():
        T_hat = 0.5 * (T_lo + T_hi)
        c = check(T_hat)
        if c is not None:
            if options.feasibility_mode == "exact_lp" and c.T < T_lo * (1 - 1e-6):
                raise AssertionError(f"feasibility not monotone: plan at {c.T} below proven bound {T_lo}")
            best = c
            T_hi = c.T
        else:
            if search.timed_out:
                break
            T_lo = T_hat
    gap = max(0.0, (T_hi - T_lo) / T_hi) if T_hi > 0 else 0.0
    return _finish(st, best, "binary_search", gap, T_lo)


def solve(configs, table, demand, budget, availability, options: SolverOptions = SolverOptions(),
          models=None, incumbent=None) -> Plan:
    fn = solve_exact if options.mode == "exact" else binary_search_on_T
    return fn(configs, table, demand, budget, availability, options, models, incumbent)


def warm_start(configs: Sequence[Configuration], demand: DemandMatrix, models, budget,
               availability: Availability | None = None, table=None) -> dict[tuple[str, str], int]:
    """Initial activation vector (feasible, or empty).

    The budget is split across models by M_r x demand; each share buys
    copies of the model's cheapest configuration serving all its classes.
    Without a ``table`` every configuration is assumed to serve every class.
    """
    if table is None:
        from ..costmodel import ThroughputTable
        table = ThroughputTable({(c.model, c.id, w): 1.0 for c in configs for (m, w) in demand.positive()
                                 if m == c.model})
    if availability is None:
        need: dict[str, int] = {}
        for c in configs:
            for t, n in c.gpu_counts.items():
                need[t] = need.get(t, 0) + n * 10 ** 6
        availability = Availability(need)
    try:
        p = build_problem(list(configs), table, demand, budget, availability)
    except InfeasibleError:
        return {}
    y = warm_start_y(p, _weights(p, models))
    if y is None:
        return {}
    return {c.key: int(n) for c, n in zip(p.configs, y) if n > 0}


def solve_multi_model(per_model_configs, table, demand: DemandMatrix, budget, availability: Availability,
                      options: SolverOptions = SolverOptions(), models=None) -> Plan:
    """Joint plan for several models sharing one budget and one GPU pool.

    ``per_model_configs`` maps model name to its configurations (a flat list
    is accepted too).  With one model this is exactly ``solve``.
    """
    if isinstance(per_model_configs, Mapping):
        flat = [c for m in sorted(per_model_configs) for c in per_model_configs[m]]
    else:
        flat = list(per_model_configs)
    return solve(flat, table, demand, budget, availability, options, models)


# -- replanning -------------------------------------------------------------------

@dataclass
class ReplanDelta:
    added: dict[tuple[str, str], int]  # copies added per config
    removed: dict[tuple[str, str], int]
    throughput_original: float  # old plan on the new demand, ignoring lost GPUs
    throughput_degraded: float  # old plan clipped to the new availability, best assignment
    throughput_replanned: float
    makespan_replanned: float

    def to_doc(self) -> dict:
        return {
            "added": [{"model": m, "config_id": c, "count": n} for (m, c), n in sorted(self.added.items())],
            "removed": [{"model": m, "config_id": c, "count": n} for (m, c), n in sorted(self.removed.items())],
            "throughput_original_rps": self.throughput_original,
            "throughput_degraded_rps": self.throughput_degraded,
            "throughput_replanned_rps": self.throughput_replanned,
            "makespan_replanned_s": self.makespan_replanned,
        }


def clip_to_availability(activations: Mapping[tuple[str, str], int], configs: Sequence[Configuration],
                         availability: Availability) -> dict[tuple[str, str], int]:
    """Remove copies (most expensive configs first) until the GPU counts fit."""
    by_key = {c.key: c for c in configs}
    y = {k: n for k, n in activations.items() if k in by_key}
    usage: dict[str, int] = {}
    for k, n in y.items():
        for t, d in by_key[k].gpu_counts.items():
            usage[t] = usage.get(t, 0) + d * n
    for k in sorted(y, key=lambda k: (-by_key[k].cost, k)):
        c = by_key[k]
        while y[k] > 0 and any(usage.get(t, 0) > availability[t] for t in c.gpu_counts):
            y[k] -= 1
            for t, d in c.gpu_counts.items():
                usage[t] -= d
    return {k: n for k, n in y.items() if n > 0}


def _throughput_of(activations, configs, table, demand) -> float:
    by_key = {c.key: c for c in configs}
    try:
        p = build_problem([by_key[k] for k in activations if k in by_key], table, demand, None,
                          Availability({t: 10 ** 9 for c in by_key.values() for t in c.gpu_counts}))
    except InfeasibleError:
        return 0.0
    y = np.array([activations.get(c.key, 0) for c in p.configs], dtype=float)
    r = assign_lp(p.R, p.f, y)
    return 0.0 if r is None else demand.total() / r[1]


def replan(previous: Plan, configs: Sequence[Configuration], table, demand: DemandMatrix, budget,
           availability: Availability, options: SolverOptions = SolverOptions(), models=None
           ) -> tuple[Plan, ReplanDelta]:
    """Re-solve after a demand shift or GPU loss, seeded from the surviving activations."""
    survivors = clip_to_availability(previous.activations, configs, availability)
    plan = solve(configs, table, demand, budget, availability, options, models, incumbent=survivors)
    T_orig = plan_makespan(previous, table, demand)
    covered = all(sum(x for (m, c, w), x in previous.assignment.items() if (m, w) == key) > 1 - 1e-9
                  for key in demand.positive())
    orig = demand.total() / T_orig if covered and math.isfinite(T_orig) and T_orig > 0 else 0.0
    keys = set(previous.activations) | set(plan.activations)
    added = {k: plan.activations.get(k, 0) - previous.activations.get(k, 0) for k in keys
             if plan.activations.get(k, 0) > previous.activations.get(k, 0)}
    removed = {k: previous.activations.get(k, 0) - plan.activations.get(k, 0) for k in keys
               if plan.activations.get(k, 0) < previous.activations.get(k, 0)}
    delta = ReplanDelta(added, removed, orig, _throughput_of(survivors, configs, table, demand),
                        demand.total() / plan.makespan, plan.makespan)
    return plan, delta
