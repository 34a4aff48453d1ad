"""Plan evaluation: analytic makespan, discrete-event replay and ablation baselines."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .catalog import Availability, Budget, GpuCatalog, ModelSpec, budget_limit
from .configspace import Configuration, enumerate_configs
from .costmodel import ThroughputTable
from .solver import InfeasibleError, Plan, SolverOptions, build_problem, solve
from .solver.problem import makespan_of, to_plan
from .workload import DEFAULT_CLASSES, DemandMatrix, RequestRecord, WorkloadType, largest_remainder, nearest_class

PERCENTILES = tuple(range(5, 101, 5))


class SimulationError(ValueError):
    pass


def evaluate_analytic(plan: Plan, table, demand: DemandMatrix) -> float:
    """max_c sum_w x_{c,w} f_w / (y_c h_{c,w}), computed from the table."""
    busy: dict[tuple[str, str], float] = {}
    for (m, c, w), x in sorted(plan.assignment.items()):
        if x <= 0 or demand[(m, w)] <= 0:
            continue
        h = table.rate(m, c, w)
        if h is None:
            raise SimulationError(f"table has no rate for configuration {c!r} on model {m!r} workload {w}")
        y = plan.activations.get((m, c), 0)
        if y < 1:
            raise SimulationError(f"configuration {c!r} has work but no active copy")
        busy[(m, c)] = busy.get((m, c), 0.0) + x * demand[(m, w)] / (y * h)
    return max(busy.values(), default=0.0)


@dataclass
class SimReport:
    makespan: float
    throughput: float
    latency_percentiles: dict[str, float]
    per_replica_utilization: dict[str, float]
    total_cost_for_run: float
    num_requests: int
    log: list[tuple] = field(default_factory=list, repr=False)  # (arrival, start, end, replica, class)

    def to_doc(self) -> dict:
        return {
            "makespan_s": self.makespan,
            "throughput_rps": self.throughput,
            "latency_percentiles_s": dict(self.latency_percentiles),
            "per_replica_utilization": dict(self.per_replica_utilization),
            "total_cost_for_run_usd": self.total_cost_for_run,
            "num_requests": self.num_requests,
        }

    def to_text(self) -> str:
        rows = [("makespan (s)", f"{self.makespan:.3f}"), ("throughput (req/s)", f"{self.throughput:.4f}"),
                ("requests", str(self.num_requests)), ("run cost ($)", f"{self.total_cost_for_run:.4f}")]
        rows += [(f"latency {k} (s)", f"{v:.3f}") for k, v in self.latency_percentiles.items()]
        rows += [(f"util {k}", f"{v:.3f}") for k, v in self.per_replica_utilization.items()]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{a:<{width}}  {b:>12}" for a, b in rows)

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["arrival_s", "start_s", "end_s", "replica_id", "class_id"])
            for row in self.log:
                w.writerow(row)


def _replicas(plan: Plan):
    multi = len({m for m, _ in plan.activations}) > 1
    out = []
    for (m, c), y in sorted(plan.activations.items()):
        for i in range(y):
            out.append(((m, c), f"{m}:{c}#{i}" if multi else f"{c}#{i}"))
    return out


def simulate_events(plan: Plan, trace: Sequence[RequestRecord], table, seed: int = 0,
                    classes: Sequence[WorkloadType] = DEFAULT_CLASSES, dispatch: str = "quota") -> SimReport:
    """Replay a trace through the plan's replicas, FCFS per replica.

    Each request of class w goes to a copy of config c with weight
    x_{c,w} / y_c.  ``dispatch="quota"`` deals out largest-remainder
    counts in a seeded random order, so the realised split matches x;
    ``dispatch="random"`` draws every request independently.
    Service time is 1 / h_{c,w}.  Requests without arrival times arrive at 0.
    """
    if dispatch not in ("quota", "random"):
        raise ValueError("dispatch must be 'quota' or 'random'")
    rng = np.random.default_rng(seed)
    reps = _replicas(plan)
    arrivals = np.array([r.arrival_time or 0.0 for r in trace], dtype=float)
    order = np.argsort(arrivals, kind="stable")
    cls = [nearest_class(r.input_len, r.output_len, classes).id for r in trace]

    groups: dict[tuple[str, int], list[int]] = {}
    for i in order:
        groups.setdefault((trace[i].model, cls[i]), []).append(int(i))
    target = np.empty(len(trace), dtype=int)
    for (m, w), idx in sorted(groups.items()):
        weights = np.array([plan.assignment.get((m, key[1], w), 0.0) / plan.activations[key]
                            if key[0] == m else 0.0 for key, _ in reps])
        if weights.sum() <= 0:
            raise SimulationError(f"plan does not serve model {m!r} workload class {w}")
        if dispatch == "quota":
            counts = largest_remainder(weights, len(idx))
            pool = np.repeat(np.arange(len(reps)), counts)
            rng.shuffle(pool)
        else:
            pool = rng.choice(len(reps), size=len(idx), p=weights / weights.sum())
        target[idx] = pool

    free = np.zeros(len(reps))
    busy = np.zeros(len(reps))
    log = []
    end_all = np.empty(len(trace))
    for i in order:
        r = target[i]
        key = reps[r][0]
        h = table.rate(key[0], key[1], cls[i])
        if h is None:
            raise SimulationError(f"table has no rate for {key[1]!r} on class {cls[i]}")
        start = max(arrivals[i], free[r])
        end = start + 1.0 / h
        free[r] = end
        busy[r] += 1.0 / h
        end_all[i] = end
        log.append((float(arrivals[i]), float(start), float(end), reps[r][1], cls[i]))
    if not len(trace):
        return SimReport(0.0, 0.0, {f"p{p}": 0.0 for p in PERCENTILES}, {}, 0.0, 0, [])
    t0 = float(arrivals.min())
    makespan = float(end_all.max()) - t0
    lat = end_all - arrivals
    pct = np.percentile(lat, PERCENTILES, method="inverted_cdf")
    util = {name: float(min(1.0, b / makespan)) if makespan > 0 else 0.0
            for (_, name), b in zip(reps, busy)}
    return SimReport(makespan, len(trace) / makespan if makespan > 0 else math.inf,
                     {f"p{p}": float(v) for p, v in zip(PERCENTILES, pct)}, util,
                     plan.total_cost * makespan / 3600.0, len(trace), log)


# -- ablation baselines -----------------------------------------------------------

@dataclass
class PlanInputs:
    catalog: GpuCatalog
    availability: Availability
    budget: Budget | float | None
    models: Sequence[ModelSpec]
    demand: DemandMatrix
    configs: list[Configuration]
    table: ThroughputTable
    options: SolverOptions = SolverOptions()
    # rebuilds rates for configurations the table lacks (homogeneous baseline)
    build_table: Callable[[list[Configuration]], ThroughputTable] | None = None
    max_gpus_per_replica: int = 8

    def solve(self) -> Plan:
        return solve(self.configs, self.table, self.demand, self.budget, self.availability,
                     self.options, self.models)


BASELINES = ("uniform_composition", "uniform_deployment", "round_robin_assignment")


def uniform_composition(inputs: PlanInputs) -> Availability:
    """Equal spend per GPU type; leftover budget buys the cheapest type."""
    types = [t for t in inputs.catalog if inputs.availability[t.name] > 0]
    B = budget_limit(inputs.budget) if inputs.budget is not None else sum(
        t.price * inputs.availability[t.name] for t in types)
    share = B / len(types)
    counts = {t.name: min(inputs.availability[t.name], int(math.floor(share / t.price + 1e-9))) for t in types}
    left = B - sum(counts[t.name] * t.price for t in types)
    for t in sorted(types, key=lambda t: (t.price, t.name)):
        extra = min(inputs.availability[t.name] - counts[t.name], int(math.floor(left / t.price + 1e-9)))
        counts[t.name] += max(extra, 0)
        left -= max(extra, 0) * t.price
    return Availability(counts)


def _fits(c: Configuration, avail: Availability) -> bool:
    return all(n <= avail[t] for t, n in c.gpu_counts.items())


def baseline(inputs: PlanInputs, kind: str, optimized: Plan | None = None) -> Plan:
    """Ablation plan.  ``kind`` is one of BASELINES or ``homogeneous:<type>``."""
    if kind == "uniform_composition":
        avail = uniform_composition(inputs)
        configs = [c for c in inputs.configs if _fits(c, avail)]
        plan = solve(configs, inputs.table, inputs.demand, inputs.budget, avail, inputs.options, inputs.models)
    elif kind == "uniform_deployment":
        configs = [c for c in inputs.configs
                   if all(s.tp_degree == inputs.catalog[s.gpu_type].gpus_per_machine for s in c.stages)]
        if not configs:
            raise InfeasibleError("memory", "no full-machine tensor-parallel configuration exists")
        plan = solve(configs, inputs.table, inputs.demand, inputs.budget, inputs.availability,
                     inputs.options, inputs.models)
    elif kind in ("round_robin_assignment", "round_robin"):
        plan = optimized if optimized is not None else inputs.solve()
        plan = round_robin(plan, inputs.configs, inputs.table, inputs.demand)
    elif kind.startswith("homogeneous"):
        plan = homogeneous(inputs, kind.split(":", 1)[1] if ":" in kind else kind[12:-1])
    else:
        raise ValueError(f"unknown baseline {kind!r}")
    plan.solver = {**plan.solver, "mode": f"baseline:{kind}"}
    return plan


def round_robin(plan: Plan, configs: Sequence[Configuration], table, demand: DemandMatrix) -> Plan:
    """Keep the plan's replicas; every replica able to serve a class gets an equal share of it."""
    by_key = {c.key: c for c in configs}
    active = [by_key[k] for k in plan.activations]
    p = build_problem(active, table, demand, None,
                      Availability({t: 10 ** 9 for c in active for t in c.gpu_counts}))
    y = np.array([plan.activations[c.key] for c in p.configs], dtype=float)
    share = y[:, None] * (p.R > 0)
    x = share / share.sum(axis=0, keepdims=True)
    T = makespan_of(p.R, p.f, y, x)
    return to_plan(p, y.astype(int), x, T, dict(plan.solver))


def homogeneous(inputs: PlanInputs, type_name: str) -> Plan:
    """Single GPU type with availability limited only by the budget."""
    t = inputs.catalog[type_name]
    if inputs.budget is None:
        raise ValueError("homogeneous baseline needs a budget")
    n = int(math.floor(budget_limit(inputs.budget) / t.price + 1e-9))
    avail = Availability({type_name: n})
    sub = GpuCatalog((t,))
    configs = []
    for m in inputs.models:
        configs += enumerate_configs(sub, avail, m, inputs.max_gpus_per_replica)
    table = inputs.table
    if inputs.build_table is not None:
        missing = [c for c in configs if not any(table.rate(c.model, c.id, w) for (m, w) in inputs.demand.positive())]
        if missing:
            table = table.overlay(inputs.build_table(missing))
    configs = [c for c in configs if any(table.rate(c.model, c.id, w) for (_, w) in inputs.demand.positive())]
    if not configs:
        raise InfeasibleError("memory", f"GPU type {type_name} cannot host the model within the budget")
    return solve(configs, table, inputs.demand, inputs.budget, avail, inputs.options, inputs.models)
