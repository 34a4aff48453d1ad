"""Acceptance suite: one PASS/FAIL line per criterion, 1-10.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from golden import golden  # noqa: E402
from oracles import exhaustive  # noqa: E402

from hetserve.catalog import LLAMA3_70B, GpuCatalog, default_catalog  # noqa: E402
from hetserve.configspace import Configuration, partition_layers  # noqa: E402
from hetserve.costmodel import estimate_throughput  # noqa: E402
from hetserve.simulator import BASELINES, PlanInputs, baseline, evaluate_analytic, simulate_events  # noqa: E402
from hetserve.solver import (InfeasibleError, SolverOptions, binary_search_on_T, check_plan,  # noqa: E402
                             makespan_bounds, proportional_assign, solve, solve_exact, solve_multi_model)
from hetserve.synthetic import catalog_instance, medium_instance, random_instance, two_model_disjoint  # noqa: E402
from hetserve.workload import DEFAULT_CLASSES, InputClass, OutputClass, WorkloadType, classify, synth_trace  # noqa: E402

RESULTS: dict[int, tuple[bool, str]] = {}


def _record(n: int, ok: bool, detail: str) -> tuple[bool, str]:
    RESULTS[n] = (ok, detail)
    return ok, detail


def summary_lines() -> list[str]:
    return [f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}" for n, (ok, detail) in sorted(RESULTS.items())]


def _exact_or_inf(inst, options=SolverOptions()):
    try:
        return solve_exact(inst.configs, inst.table, inst.demand, inst.budget, inst.availability, options)
    except InfeasibleError:
        return None


# -- 1. worked example ----------------------------------------------------------------

def criterion_1():
    g = golden()
    c = g.config
    comps = {
        "composition 1": ([(c("t1"), 1), (c("t2"), 1), (c("t3"), 1)], 44.05),
        "composition 2": ([(c("t1"), 1), (c("t2"), 2)], 35.24),
        "TP pair": ([(c("t1"), 1), (c("t2x2"), 1)], 30.94),
    }
    ok = True
    parts = []
    for name, (active, want) in comps.items():
        _, T = proportional_assign(active, g.table, g.demand)
        ok &= abs(T - want) <= 0.01
        parts.append(f"{name} {T:.3f} (want {want})")
    t0 = time.perf_counter()
    plan = solve_exact(g.configs, g.table, g.demand, g.budget, g.availability)
    wall = time.perf_counter() - t0
    a = plan.assignment
    structure = (a.get(("toy", "t1", 2), 0) >= 1 - 1e-9 and a.get(("toy", "t2x2", 1), 0) >= 0.8)
    ok &= abs(plan.makespan - 28.67) <= 0.01 and structure and wall < 1.0
    parts.append(f"exact T {plan.makespan:.3f} (want 28.67 +-0.01), case-3 structure {structure}, {wall:.3f} s")
    return _record(1, ok, "; ".join(parts))


# -- 2. oracle equivalence ------------------------------------------------------------

def criterion_2(n=200):
    t0 = time.perf_counter()
    bad = 0
    for seed in range(n):
        inst = random_instance(seed)
        want = exhaustive(inst.configs, inst.table, inst.demand, inst.budget, inst.availability)
        plan = _exact_or_inf(inst)
        got = math.inf if plan is None else plan.makespan
        if math.isinf(want) or math.isinf(got):
            bad += math.isinf(want) != math.isinf(got)
        elif abs(got - want) > 1e-6 * want:
            bad += 1
    wall = time.perf_counter() - t0
    return _record(2, bad == 0 and wall < 60, f"{n} instances, {bad} mismatches, {wall:.1f} s")


# -- 3. binary search fidelity --------------------------------------------------------

def criterion_3(n=30):
    worst, fewer, speed = 0.0, 0, []
    for seed in range(n):
        inst = medium_instance(seed)
        args = (inst.configs, inst.table, inst.demand, inst.budget, inst.availability)
        t0 = time.perf_counter()
        ex = solve_exact(*args)
        t1 = time.perf_counter()
        lo, _ = makespan_bounds(inst.configs, inst.table, inst.demand, inst.availability, inst.budget)
        bs = binary_search_on_T(*args, SolverOptions(mode="binary_search", tolerance=0.01 * lo))
        t2 = time.perf_counter()
        worst = max(worst, (bs.makespan - ex.makespan) / ex.makespan)
        fewer += bs.solver["evaluated_nodes"] < ex.solver["evaluated_nodes"]
        speed.append((t1 - t0) / max(t2 - t1, 1e-9))
    ok = worst < 0.01 and fewer == n
    return _record(3, ok, f"worst deviation {100 * worst:.3f}%, fewer evaluations {fewer}/{n}, "
                          f"median speedup {np.median(speed):.2f}x (reported only)")


# -- 4. constraint fuzzing ------------------------------------------------------------

FUZZ_OPTIONS = (
    SolverOptions(),
    SolverOptions(mode="binary_search", tolerance=0.05),
    SolverOptions(mode="binary_search", tolerance=0.05, feasibility_mode="knapsack_greedy"),
    SolverOptions(enable_pruning=False, enable_warm_start=False, enable_lower_bound_stop=True),
)


def criterion_4(n=1000):
    violations, plans, infeasible = 0, 0, 0
    for seed in range(n):
        inst = random_instance(10_000 + seed, max_configs=5)
        opts = FUZZ_OPTIONS[seed % len(FUZZ_OPTIONS)]
        try:
            plan = solve(inst.configs, inst.table, inst.demand, inst.budget, inst.availability, opts)
        except InfeasibleError:
            infeasible += 1
            continue
        plans += 1
        violations += len(check_plan(plan, inst.configs, inst.table, inst.demand, inst.budget,
                                     inst.availability))
    return _record(4, violations == 0,
                   f"{n} runs, {plans} plans checked, {infeasible} infeasible, {violations} violations")


# -- 5. baseline dominance ------------------------------------------------------------

def criterion_5(n=20):
    ratios = {k: [] for k in BASELINES}
    infeasible = {k: 0 for k in BASELINES}
    ok = True
    for seed in range(n):
        inst = catalog_instance(seed)
        inputs = PlanInputs(inst.catalog, inst.availability, inst.budget, inst.models, inst.demand,
                            inst.configs, inst.table)
        opt = inputs.solve()
        for kind in BASELINES:
            try:
                T = baseline(inputs, kind, opt).makespan
            except InfeasibleError:
                infeasible[kind] += 1
                continue
            ok &= opt.makespan <= T * (1 + 1e-9)
            ratios[kind].append(T / opt.makespan)
    parts = [f"{k} geo-mean degradation {100 * (math.exp(np.mean(np.log(r))) - 1):.1f}%"
             f" ({len(r)} feasible, {infeasible[k]} infeasible)" for k, r in ratios.items()]
    return _record(5, ok, f"{n} instances, optimized <= baseline everywhere: {ok}; " + "; ".join(parts))


# -- 6. multi-model reduction ---------------------------------------------------------

def criterion_6(n=50, n_pairs=30):
    same = 0
    for seed in range(n):
        inst = random_instance(20_000 + seed)
        a = _exact_or_inf(inst)
        try:
            b = solve_multi_model({inst.models[0].name: inst.configs}, inst.table, inst.demand, inst.budget,
                                  inst.availability)
        except InfeasibleError:
            b = None
        if a is None or b is None:
            same += a is None and b is None
        else:
            same += (a.activations == b.activations and a.assignment == b.assignment
                     and a.makespan == b.makespan)
    worst = 0.0
    for seed in range(n_pairs):
        inst = two_model_disjoint(seed)
        joint = solve_multi_model({m.name: [c for c in inst.configs if c.model == m.name] for m in inst.models},
                                  inst.table, inst.demand, None, inst.availability)
        parts = [solve_exact([c for c in inst.configs if c.model == m.name], inst.table,
                             inst.demand.for_model(m.name), None, inst.availability).makespan
                 for m in inst.models]
        worst = max(worst, abs(joint.makespan - max(parts)) / max(parts))
    ok = same == n and worst <= 1e-6
    return _record(6, ok, f"M=1 identical {same}/{n}; disjoint pairs worst |T - max| {worst:.2e} over {n_pairs}")


# -- 7. cost-model ordering -----------------------------------------------------------

def table5_rates(model=LLAMA3_70B):
    """Analytic rates for the six comparable layouts, long-input/short-output class.

    L40 machines get 8 GPUs here so the non-cross (2,4) and (4,2) layouts exist.
    """
    cat = GpuCatalog(tuple(replace(t, gpus_per_machine=8) if t.name == "L40" else t for t in default_catalog()))
    w = DEFAULT_CLASSES[0]
    out = {}
    for t in ("H100", "L40"):
        layouts = {
            "(2,4)": Configuration.build(model, [(t, 2)] * 4, cat, [0, 0, 0, 0]),
            "(4,2)": Configuration.build(model, [(t, 4)] * 2, cat, [0, 0]),
            "(4,2) cross": Configuration.build(model, [(t, 4)] * 2, cat, [0, 1]),
        }
        out[t] = {k: estimate_throughput(c, model, w, cat) for k, c in layouts.items()}
    return out


def criterion_7():
    rates = table5_rates()
    ok = all(r["(2,4)"] > r["(4,2)"] >= r["(4,2) cross"] for r in rates.values())
    detail = "; ".join(f"{t} " + " > ".join(f"{k} {v:.3g}" for k, v in r.items()) for t, r in rates.items())
    return _record(7, ok, detail + " req/s")


# -- 8. layer partitioning ------------------------------------------------------------

def criterion_8(n=500):
    exact = partition_layers(24, [1, 2]) == [8, 16]
    rng = np.random.default_rng(8)
    bad = 0
    for _ in range(n):
        s = int(rng.integers(1, 9))
        L = int(rng.integers(s, 129))
        mems = rng.uniform(0.5, 100, size=s).tolist()
        out = partition_layers(L, mems)
        bad += not (len(out) == s and sum(out) == L and min(out) >= 1)
    return _record(8, exact and bad == 0, f"(24, [1,2]) -> {partition_layers(24, [1, 2])}; {bad}/{n} invariant failures")


# -- 9. classification ----------------------------------------------------------------

def criterion_9(n=10_000):
    examples = [((2455, 18), (InputClass.LONG_IN, OutputClass.SHORT_OUT)),
                ((496, 510), (InputClass.SHORT_IN, OutputClass.LONG_OUT)),
                ((512, 128), (InputClass.SHORT_IN, OutputClass.SHORT_OUT))]
    ex_ok = all(classify(*a) == want for a, want in examples)
    rng = np.random.default_rng(9)
    bad = 0
    for _ in range(n):
        i, o = (int(v) for v in rng.integers(0, 4096, size=2))
        di, do = (int(v) for v in rng.integers(0, 1024, size=2))
        a, b = classify(i, o), classify(i + di, o + do)
        bad += (a[0] is InputClass.LONG_IN and b[0] is InputClass.SHORT_IN) or (
            a[1] is OutputClass.LONG_OUT and b[1] is OutputClass.SHORT_OUT)
    return _record(9, ex_ok and bad == 0, f"examples {'ok' if ex_ok else 'wrong'}; {bad}/{n} monotonicity violations")


# -- 10. simulator convergence --------------------------------------------------------

SIM_CLASSES = (WorkloadType(1, 2048, 64), WorkloadType(2, 256, 256))


def sim_gaps(dispatch: str, scales=(1, 10, 100), seeds=20):
    g = golden()
    plan = g.case3_plan()
    out = []
    for k in scales:
        analytic = evaluate_analytic(plan, g.table, g.demand.scaled(k))
        gaps = []
        for s in range(seeds):
            trace = synth_trace({1: 80, 2: 20}, 100 * k, s, "toy", SIM_CLASSES)
            rep = simulate_events(plan, trace, g.table, seed=s, classes=SIM_CLASSES, dispatch=dispatch)
            gaps.append(abs(rep.makespan / k - analytic / k) / (analytic / k))
        out.append(float(np.mean(gaps)))
    return out


def criterion_10():
    t0 = time.perf_counter()
    rnd = sim_gaps("random")
    quota = sim_gaps("quota", seeds=3)
    ok = all(b < a for a, b in zip(rnd, rnd[1:])) and rnd[-1] < 0.02
    return _record(10, ok, "weighted-random dispatch mean gap over 20 seeds at x1/x10/x100: "
                           + ", ".join(f"{100 * v:.2f}%" for v in rnd)
                           + "; quota dispatch: " + ", ".join(f"{v:.1e}" for v in quota)
                           + f"; {time.perf_counter() - t0:.1f} s")


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 11)}


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    ok, detail = CRITERIA[n]()
    assert ok, detail


if __name__ == "__main__":
    for n, fn in CRITERIA.items():
        ok, detail = fn()
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
