"""Plan container, solver options, infeasibility errors and the plan checker."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from ..catalog import Availability, budget_limit
from ..configspace import Configuration
from ..workload import DemandMatrix

MODES = ("exact", "binary_search")
FEASIBILITY_MODES = ("exact_lp", "knapsack_greedy")
CAUSES = ("budget", "availability", "memory", "unservable")


class InfeasibleError(RuntimeError):
    """No activation vector serves every demanded class.

    ``cause`` is one of ``budget``, ``availability``, ``memory`` or
    ``unservable`` and names the binding constraint.
    """

    def __init__(self, cause: str, message: str):
        assert cause in CAUSES, cause
        super().__init__(message)
        self.cause = cause


@dataclass(frozen=True)
class SolverOptions:
    mode: str = "exact"
    tolerance: float = 1.0  # seconds, binary search stops when T_hi - T_lo <= tolerance
    wall_clock_limit: float = 600.0
    enable_pruning: bool = True
    enable_warm_start: bool = True
    enable_lower_bound_stop: bool = False
    feasibility_mode: str = "exact_lp"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.feasibility_mode not in FEASIBILITY_MODES:
            raise ValueError(f"feasibility_mode must be one of {FEASIBILITY_MODES}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if not self.wall_clock_limit > 0:
            raise ValueError("wall_clock_limit must be > 0")


@dataclass
class Plan:
    activations: dict[tuple[str, str], int]  # (model, config id) -> y_c
    assignment: dict[tuple[str, str, int], float]  # (model, config id, workload id) -> x
    makespan: float
    total_cost: float
    gpu_usage: dict[str, int]
    solver: dict = field(default_factory=dict)  # mode, gap, evaluated_nodes, wall_s

    @property
    def num_gpus(self) -> int:
        return sum(self.gpu_usage.values())

    def to_doc(self) -> dict:
        return {
            "makespan_s": self.makespan,
            "total_cost_per_h": self.total_cost,
            "activations": [{"config_id": c, "model": m, "count": n}
                            for (m, c), n in sorted(self.activations.items())],
            "assignment": [{"config_id": c, "model": m, "workload_id": w, "fraction": x}
                           for (m, c, w), x in sorted(self.assignment.items())],
            "gpu_usage": dict(sorted(self.gpu_usage.items())),
            "solver": dict(self.solver),
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "Plan":
        if "plan" in doc and "makespan_s" not in doc:
            doc = doc["plan"]
        models = {r["config_id"]: r.get("model") for r in doc["activations"]}
        act = {(r.get("model") or "", r["config_id"]): int(r["count"]) for r in doc["activations"]}
        asg = {}
        for r in doc["assignment"]:
            m = r.get("model") or models.get(r["config_id"]) or ""
            asg[(m, r["config_id"], int(r["workload_id"]))] = float(r["fraction"])
        return cls(act, asg, float(doc["makespan_s"]), float(doc["total_cost_per_h"]),
                   {k: int(v) for k, v in doc.get("gpu_usage", {}).items()}, dict(doc.get("solver", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_doc(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Plan":
        return cls.from_doc(json.loads(Path(path).read_text()))

    def summary(self) -> str:
        lines = [f"makespan {self.makespan:.2f} s   cost {self.total_cost:.2f} $/h   "
                 f"GPUs {self.num_gpus}"]
        width = max([len(c) for _, c in self.activations] + [6])
        lines.append(f"  {'config':<{width}}  {'model':<12} {'copies':>6}  classes")
        for (m, c), n in sorted(self.activations.items()):
            ws = ", ".join(f"w{w}:{x:.0%}" for (m2, c2, w), x in sorted(self.assignment.items())
                           if m2 == m and c2 == c and x > 0)
            lines.append(f"  {c:<{width}}  {m:<12} {n:>6}  {ws}")
        return "\n".join(lines)


def plan_makespan(plan: Plan, rates, demand: DemandMatrix) -> float:
    """max over active configs of sum_w x * f_w / (y_c * h_{c,w})."""
    per: dict[tuple[str, str], float] = {}
    for (m, c, w), x in plan.assignment.items():
        if x <= 0:
            continue
        h = rates.rate(m, c, w)
        y = plan.activations.get((m, c), 0)
        if h is None or y <= 0:
            return math.inf
        per[(m, c)] = per.get((m, c), 0.0) + x * demand[(m, w)] / (y * h)
    return max(per.values(), default=0.0)


def check_plan(plan: Plan, configs: Iterable[Configuration], table, demand: DemandMatrix,
               budget, availability: Availability, rtol: float = 1e-9) -> list[str]:
    """Every invariant violation of ``plan``; an empty list means valid.

    Written independently of the solver: it recomputes everything from the
    primitive inputs rather than trusting stored plan fields.
    """
    by_key = {c.key: c for c in configs}
    bad: list[str] = []
    for key, y in plan.activations.items():
        if key not in by_key:
            bad.append(f"unknown configuration {key}")
        if int(y) != y or y < 0:
            bad.append(f"activation {key} = {y} is not a non-negative integer")
    # assignment sums
    sums: dict[tuple[str, int], float] = {}
    for (m, c, w), x in plan.assignment.items():
        if not -rtol <= x <= 1 + rtol:
            bad.append(f"fraction x[{c},{m},w{w}] = {x} outside [0,1]")
        sums[(m, w)] = sums.get((m, w), 0.0) + x
        if x > 0 and plan.activations.get((m, c), 0) < 1:
            bad.append(f"x[{c},{m},w{w}] > 0 but configuration is inactive")
        if x > 0 and table.rate(m, c, w) is None:
            bad.append(f"x[{c},{m},w{w}] > 0 but the table has no rate for it")
    for key, f in demand.positive().items():
        if abs(sums.get(key, 0.0) - 1.0) > 1e-9:
            bad.append(f"assignment for {key} sums to {sums.get(key, 0.0)!r}")
    # makespan
    T = plan_makespan(plan, table, demand)
    if T > plan.makespan * (1 + 1e-9) + 1e-12:
        bad.append(f"makespan {plan.makespan} understates recomputed {T}")
    # budget and availability
    cost = sum(by_key[k].cost * y for k, y in plan.activations.items() if k in by_key)
    B = math.inf if budget is None else budget_limit(budget)
    if cost > B * (1 + rtol):
        bad.append(f"cost {cost} exceeds budget {B}")
    if abs(cost - plan.total_cost) > 1e-9 * max(1.0, cost):
        bad.append(f"total_cost {plan.total_cost} != recomputed {cost}")
    usage: dict[str, int] = {}
    for k, y in plan.activations.items():
        for t, n in (by_key[k].gpu_counts.items() if k in by_key else ()):
            usage[t] = usage.get(t, 0) + n * y
    for t, n in usage.items():
        if n > availability[t]:
            bad.append(f"uses {n} {t} but only {availability[t]} available")
    if {t: n for t, n in usage.items() if n} != {t: n for t, n in plan.gpu_usage.items() if n}:
        bad.append(f"gpu_usage {plan.gpu_usage} != recomputed {usage}")
    return bad
