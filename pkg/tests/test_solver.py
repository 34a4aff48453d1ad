import math

import numpy as np
import pytest
from golden import golden
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import assignment_makespan, exhaustive

from hetserve.catalog import Availability, Budget, GpuCatalog
from hetserve.configspace import Configuration
from hetserve.costmodel import ThroughputTable
from hetserve.solver import (InfeasibleError, Plan, SolverOptions, binary_search_on_T, check_plan,
                             feasibility_check, inner_assign, makespan_bounds, proportional_assign, replan, solve,
                             solve_exact, solve_multi_model, warm_start)
from hetserve.synthetic import medium_instance, random_instance, toy_catalog, toy_model, two_model_disjoint
from hetserve.workload import DemandMatrix


def _args(inst):
    return inst.configs, inst.table, inst.demand, inst.budget, inst.availability


def _exact_T(inst, **kw):
    try:
        return solve_exact(*_args(inst), SolverOptions(**kw)).makespan
    except InfeasibleError:
        return math.inf


# -- fixed activations ------------------------------------------------------------------

def test_case3_inner_assignment():
    """Optimal split on the Case 3 activations, derived by balancing both replicas.

    t1 time 80a + 20/1.2 equals the TP pair's 80(1-a)/2.4 at a = (50/3)/(340/3) = 5/34.
    The rounded 15/85 split evaluates to 28.67 s, slightly above the optimum.
    """
    g = golden()
    asg, T = inner_assign([(g.config("t1"), 1), (g.config("t2x2"), 1)], g.table, g.demand)
    a = 5 / 34
    assert T == pytest.approx(80 * a + 50 / 3)
    assert asg[("toy", "t1", 2)] == pytest.approx(1.0)
    assert asg[("toy", "t1", 1)] == pytest.approx(a)
    assert asg[("toy", "t2x2", 1)] == pytest.approx(1 - a)
    assert T == pytest.approx(assignment_makespan([g.config("t1"), g.config("t2x2")], [1, 1], g.table, g.demand))
    assert g.case3_plan().makespan == pytest.approx(28.67, abs=0.01)


def _one_config(rate=2.0, f=100):
    cat = toy_catalog(1, np.random.default_rng(0))
    m = toy_model()
    c = Configuration.build(m, [("g0", 1)], cat)
    return c, ThroughputTable({(m.name, c.id, 1): rate}), DemandMatrix.single(m.name, {1: f})


def test_single_replica_inner_assign():
    c, t, d = _one_config()
    asg, T = inner_assign([(c, 1)], t, d)
    assert asg == {("toy", c.id, 1): 1.0} and T == 50.0


def test_two_copies_split_evenly():
    c, t, d = _one_config()
    _, T = inner_assign([(c, 2)], t, d)
    assert T == pytest.approx(25.0)


@pytest.mark.parametrize("ids,want", [
    ({"t1": 1, "t2": 1, "t3": 1}, 80 / 2.2 + 20 / 2.6),
    ({"t1": 1, "t2": 2}, 35.24),
    ({"t1": 1, "t2x2": 1}, 30.94),
])
def test_proportional_compositions(ids, want):
    g = golden()
    _, T = proportional_assign([(g.config(c), n) for c, n in ids.items()], g.table, g.demand)
    assert T == pytest.approx(want, abs=0.01)


def test_inner_assign_unservable():
    g = golden()
    t = ThroughputTable({("toy", "t3", 1): 1.0})
    with pytest.raises(InfeasibleError) as e:
        inner_assign([(g.config("t3"), 1)], t, g.demand)
    assert e.value.cause == "unservable"


@pytest.mark.parametrize("seed", range(20))
def test_inner_assign_matches_textbook_lp(seed):
    inst = random_instance(seed, max_configs=4)
    rng = np.random.default_rng(seed)
    y = [int(v) for v in rng.integers(1, 3, size=len(inst.configs))]
    want = assignment_makespan(inst.configs, y, inst.table, inst.demand)
    if math.isinf(want):
        return
    _, T = inner_assign(list(zip(inst.configs, y)), inst.table, inst.demand)
    assert T == pytest.approx(want, rel=1e-7)


# -- exact search -----------------------------------------------------------------------

def test_worked_example_optimum():
    """The exact optimum of the shipped instance.

    The Case 3 plan (15/85 split, 28.67 s) is feasible but not optimal; the
    LP optimum on the same activations lowers w1's share on t1 to about 14.7%.
    """
    g = golden()
    plan = solve_exact(g.configs, g.table, g.demand, g.budget, g.availability)
    assert plan.activations == {("toy", "t1"): 1, ("toy", "t2x2"): 1}
    assert plan.makespan == pytest.approx(28.431, abs=1e-3)
    assert plan.makespan <= g.case3_plan().makespan
    assert check_plan(plan, g.configs, g.table, g.demand, g.budget, g.availability) == []
    assert plan.makespan == pytest.approx(exhaustive(g.configs, g.table, g.demand, g.budget, g.availability))


def test_budget_below_cheapest():
    g = golden()
    with pytest.raises(InfeasibleError, match="budget below cheapest feasible configuration") as e:
        solve_exact(g.configs, g.table, g.demand, Budget(1.0), g.availability)
    assert e.value.cause == "budget"


def test_availability_cause():
    g = golden()
    with pytest.raises(InfeasibleError) as e:
        solve_exact(g.configs, g.table, g.demand, g.budget, Availability({}))
    assert e.value.cause == "availability"


def test_memory_cause():
    g = golden()
    with pytest.raises(InfeasibleError) as e:
        solve_exact([], g.table, g.demand, g.budget, g.availability)
    assert e.value.cause == "memory"


@pytest.mark.parametrize("seed", range(0, 400, 7))
def test_oracle_equivalence(seed):
    inst = random_instance(seed)
    want = exhaustive(*_args(inst))
    got = _exact_T(inst)
    if math.isinf(want):
        assert math.isinf(got)
    else:
        assert got == pytest.approx(want, rel=1e-6)


@pytest.mark.parametrize("kw", [dict(enable_pruning=False), dict(enable_warm_start=False),
                                dict(enable_pruning=False, enable_warm_start=False)])
def test_options_do_not_change_optimum(kw):
    for seed in range(30):
        inst = random_instance(500 + seed)
        assert _exact_T(inst, **kw) == pytest.approx(_exact_T(inst), rel=1e-9)


def test_lower_bound_stop_within_slack():
    for seed in range(15):
        inst = medium_instance(seed)
        lo, _ = makespan_bounds(inst.configs, inst.table, inst.demand, inst.availability, inst.budget)
        T = _exact_T(inst, enable_lower_bound_stop=True)
        assert T >= _exact_T(inst) * (1 - 1e-9)
        assert T <= max(_exact_T(inst), lo * (1 + 1e-3)) * (1 + 1e-9)


def test_deterministic():
    inst = medium_instance(3)
    a, b = solve_exact(*_args(inst)), solve_exact(*_args(inst))
    assert (a.activations, a.assignment, a.makespan) == (b.activations, b.assignment, b.makespan)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([0.5, 3.0, 10.0]))
def test_scaling_covariance(seed, k):
    inst = random_instance(seed)
    try:
        a = solve_exact(*_args(inst))
    except InfeasibleError:
        return
    b = solve_exact(inst.configs, inst.table, inst.demand.scaled(k), inst.budget, inst.availability)
    assert b.makespan == pytest.approx(k * a.makespan, rel=1e-7)
    assert b.activations == a.activations


def _price_scaled(inst, k):
    cat = GpuCatalog(tuple(type(t)(t.name, t.peak_flops, t.mem_bandwidth, t.mem_capacity, t.price * k,
                                   t.gpus_per_machine, t.zone) for t in inst.catalog))
    m = inst.models[0]
    configs = [Configuration.build(m, [(s.gpu_type, s.tp_degree) for s in c.stages], cat,
                                   [s.machine for s in c.stages]) for c in inst.configs]
    return configs, Budget(inst.budget.limit * k)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([0.25, 4.0]))
def test_price_scale_invariance(seed, k):
    inst = random_instance(seed)
    try:
        a = solve_exact(*_args(inst))
    except InfeasibleError:
        return
    configs, B = _price_scaled(inst, k)
    b = solve_exact(configs, inst.table, inst.demand, B, inst.availability)
    assert b.makespan == pytest.approx(a.makespan, rel=1e-9)
    assert b.activations == a.activations


@pytest.mark.parametrize("seed", range(60))
def test_every_plan_passes_checker(seed):
    inst = random_instance(3000 + seed, max_configs=5)
    for opts in (SolverOptions(), SolverOptions(mode="binary_search", tolerance=0.1),
                 SolverOptions(mode="binary_search", feasibility_mode="knapsack_greedy")):
        try:
            plan = solve(*_args(inst), opts)
        except InfeasibleError:
            continue
        assert check_plan(plan, *_args(inst)) == []


def test_checker_catches_violations():
    g = golden()
    plan = solve_exact(g.configs, g.table, g.demand, g.budget, g.availability)
    args = (g.configs, g.table, g.demand, g.budget, g.availability)
    bad = Plan(dict(plan.activations), dict(plan.assignment), plan.makespan * 0.9, plan.total_cost,
               dict(plan.gpu_usage))
    assert any("understates" in v for v in check_plan(bad, *args))
    bad = Plan({**plan.activations, ("toy", "t3"): 1}, dict(plan.assignment), plan.makespan, plan.total_cost + 2,
               {**plan.gpu_usage, "t3": 1})
    assert any("budget" in v for v in check_plan(bad, *args))
    asg = dict(plan.assignment)
    asg[("toy", "t1", 1)] += 0.1
    bad = Plan(dict(plan.activations), asg, 100.0, plan.total_cost, dict(plan.gpu_usage))
    assert any("sums to" in v for v in check_plan(bad, *args))
    bad = Plan({("toy", "t2x2"): 2}, {("toy", "t2x2", 1): 1.0, ("toy", "t2x2", 2): 1.0}, 100.0, 8.0, {"t2": 4})
    assert any("available" in v for v in check_plan(bad, *args))


# -- bounds and feasibility ---------------------------------------------------------------

def test_bounds_on_worked_example():
    g = golden()
    lo, hi = makespan_bounds(g.configs, g.table, g.demand, g.availability, g.budget)
    T = solve_exact(g.configs, g.table, g.demand, g.budget, g.availability).makespan
    assert lo <= T <= hi
    assert lo <= 28.67 <= hi


def test_bounds_one_config_one_class():
    c, t, d = _one_config(rate=2.0, f=100)
    lo, hi = makespan_bounds([c], t, d, Availability({"g0": 4}))
    assert lo == pytest.approx(100 / (4 * 2.0)) and hi == pytest.approx(lo)


@pytest.mark.parametrize("seed", range(100))
def test_bounds_bracket_optimum(seed):
    inst = random_instance(7000 + seed)
    try:
        T = solve_exact(*_args(inst)).makespan
    except InfeasibleError:
        return
    lo, hi = makespan_bounds(inst.configs, inst.table, inst.demand, inst.availability, inst.budget)
    assert lo <= T * (1 + 1e-9) and T <= hi * (1 + 1e-9)


def test_feasibility_examples():
    g = golden()
    args = (g.configs, g.table, g.demand, g.budget, g.availability)
    assert feasibility_check(0.0, *args) is None
    plan = feasibility_check(28.67 + 1e-6, *args)
    assert plan is not None and plan.makespan <= 28.67 + 1e-6
    assert plan.activations == {("toy", "t1"): 1, ("toy", "t2x2"): 1}
    assert feasibility_check(28.0, *args) is None
    lo, hi = makespan_bounds(g.configs, g.table, g.demand, g.availability, g.budget)
    for mode in ("exact_lp", "knapsack_greedy"):
        assert feasibility_check(hi, *args, mode=mode) is not None


@pytest.mark.parametrize("seed", range(25))
def test_feasibility_monotone(seed):
    inst = medium_instance(seed)
    T = solve_exact(*_args(inst)).makespan
    grid = [T * f for f in (0.9, 0.99, 0.999999, 1.000001, 1.01, 1.2, 2.0)]
    got = [feasibility_check(t, *_args(inst)) is not None for t in grid]
    assert got == sorted(got) and got[3] and not got[1]


@pytest.mark.parametrize("seed", range(25))
def test_knapsack_is_sound(seed):
    inst = medium_instance(seed)
    T = solve_exact(*_args(inst)).makespan
    for f in (0.95, 1.05, 1.5, 3.0):
        plan = feasibility_check(T * f, *_args(inst), mode="knapsack_greedy")
        if plan is not None:
            assert f >= 1 and plan.makespan <= T * f * (1 + 1e-9)
            assert check_plan(plan, *_args(inst)) == []


# -- binary search ----------------------------------------------------------------------

def test_binary_search_worked_example():
    g = golden()
    args = (g.configs, g.table, g.demand, g.budget, g.availability)
    T = solve_exact(*args).makespan
    bs = binary_search_on_T(*args, SolverOptions(mode="binary_search", tolerance=0.01))
    assert T <= bs.makespan <= T + 0.01


def test_large_tolerance_skips_iterations():
    g = golden()
    args = (g.configs, g.table, g.demand, g.budget, g.availability)
    lo, hi = makespan_bounds(g.configs, g.table, g.demand, g.availability, g.budget)
    bs = binary_search_on_T(*args, SolverOptions(mode="binary_search", tolerance=hi - lo + 1))
    assert bs.makespan <= hi
    assert bs.solver["node_lps"] == 1  # only the root relaxation


@pytest.mark.parametrize("seed", range(0, 30, 3))
def test_binary_search_close_to_exact(seed):
    inst = medium_instance(seed)
    ex = solve_exact(*_args(inst))
    lo, _ = makespan_bounds(inst.configs, inst.table, inst.demand, inst.availability, inst.budget)
    bs = binary_search_on_T(*_args(inst), SolverOptions(mode="binary_search", tolerance=0.01 * lo))
    assert ex.makespan * (1 - 1e-9) <= bs.makespan <= ex.makespan * 1.01
    assert bs.solver["evaluated_nodes"] < ex.solver["evaluated_nodes"]


# -- warm start, multi-model, replanning --------------------------------------------------

def test_warm_start_single_model_uses_budget():
    g = golden()
    plenty = Availability({"t1": 10, "t2": 10, "t3": 10})
    y = warm_start(g.configs, g.demand, [g.model], g.budget, plenty, g.table)
    spent = sum(g.config(c).cost * n for (_, c), n in y.items())
    cheapest = min(c.cost for c in g.configs if all(g.table.rate("toy", c.id, w) for w in (1, 2)))
    assert y and g.budget.limit - cheapest < spent <= g.budget.limit
    # with the golden availability the chosen type runs out first
    y = warm_start(g.configs, g.demand, [g.model], g.budget, g.availability, g.table)
    assert sum(g.config(c).gpu_counts.get("t2", 0) * n for (_, c), n in y.items()) <= 2


def test_warm_start_two_models_split():
    rng = np.random.default_rng(0)
    cat = toy_catalog(2, rng)
    big, small = toy_model("big"), toy_model("small")
    configs = [Configuration.build(big, [("g0", 1)], cat), Configuration.build(small, [("g1", 1)], cat)]
    demand = DemandMatrix({("big", 1): 70, ("small", 1): 30})
    B = 100 * (configs[0].cost + configs[1].cost)
    y = warm_start(configs, demand, None, Budget(B))
    spend = {m: configs[i].cost * y[(m, configs[i].id)] for i, m in enumerate(("big", "small"))}
    total = sum(spend.values())
    assert abs(spend["big"] - 0.7 * B) <= configs[0].cost
    assert abs(spend["small"] - 0.3 * B) <= configs[1].cost
    assert total <= B


def test_warm_start_empty_when_unaffordable():
    g = golden()
    assert warm_start(g.configs, g.demand, [g.model], Budget(0.5), g.availability, g.table) == {}


@pytest.mark.parametrize("seed", range(20))
def test_multi_model_single_is_identical(seed):
    inst = random_instance(900 + seed)
    try:
        a = solve_exact(*_args(inst))
    except InfeasibleError:
        with pytest.raises(InfeasibleError):
            solve_multi_model({"toy": inst.configs}, inst.table, inst.demand, inst.budget, inst.availability)
        return
    b = solve_multi_model({"toy": inst.configs}, inst.table, inst.demand, inst.budget, inst.availability)
    assert (a.activations, a.assignment, a.makespan) == (b.activations, b.assignment, b.makespan)


@pytest.mark.parametrize("seed", range(15))
def test_multi_model_disjoint_decomposes(seed):
    inst = two_model_disjoint(seed)
    per = {m.name: [c for c in inst.configs if c.model == m.name] for m in inst.models}
    joint = solve_multi_model(per, inst.table, inst.demand, None, inst.availability)
    parts = [solve_exact(cs, inst.table, inst.demand.for_model(m), None, inst.availability).makespan
             for m, cs in per.items()]
    assert joint.makespan == pytest.approx(max(parts), rel=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_multi_model_shared_type_respects_availability(seed):
    rng = np.random.default_rng(seed)
    cat = toy_catalog(2, rng)
    m1, m2 = toy_model("m1"), toy_model("m2")
    configs = [Configuration.build(m, g, cat) for m in (m1, m2) for g in ([("g0", 1)], [("g0", 2)], [("g1", 1)])]
    rates = {(c.model, c.id, 1): float(rng.uniform(0.5, 3)) for c in configs}
    demand = DemandMatrix({("m1", 1): 50, ("m2", 1): 40})
    avail = Availability({"g0": 3, "g1": 1})
    plan = solve_multi_model(configs, ThroughputTable(rates), demand, None, avail)
    assert plan.gpu_usage.get("g0", 0) <= 3 and plan.gpu_usage.get("g1", 0) <= 1
    assert check_plan(plan, configs, ThroughputTable(rates), demand, None, avail) == []


def test_replan_after_gpu_loss():
    inst = medium_instance(4)
    plan = solve_exact(*_args(inst))
    t = max(plan.gpu_usage, key=plan.gpu_usage.get)
    lost = min(2, plan.gpu_usage[t])
    avail = inst.availability.replace(**{t: plan.gpu_usage[t] - lost})
    new, delta = replan(plan, inst.configs, inst.table, inst.demand, inst.budget, avail)
    assert new.gpu_usage.get(t, 0) <= avail[t]
    assert check_plan(new, inst.configs, inst.table, inst.demand, inst.budget, avail) == []
    assert delta.throughput_degraded <= delta.throughput_replanned * (1 + 1e-9)
    assert delta.throughput_replanned <= delta.throughput_original * (1 + 1e-9)
    assert delta.removed


def test_replan_unchanged_is_idempotent():
    g = golden()
    args = (g.configs, g.table, g.demand, g.budget, g.availability)
    plan = solve_exact(*args)
    new, delta = replan(plan, *args)
    assert new.makespan == pytest.approx(plan.makespan)
    assert not delta.added and not delta.removed


def test_replan_demand_shift_moves_mass():
    rng = np.random.default_rng(1)
    cat = toy_catalog(2, rng)
    m = toy_model()
    a, b = Configuration.build(m, [("g0", 1)], cat), Configuration.build(m, [("g1", 1)], cat)
    table = ThroughputTable({("toy", a.id, 1): 3.0, ("toy", a.id, 2): 1.0,
                             ("toy", b.id, 1): 1.0, ("toy", b.id, 2): 3.0})
    avail = Availability({"g0": 1, "g1": 1})
    before = DemandMatrix.single("toy", {1: 80, 2: 20})
    after = DemandMatrix.single("toy", {1: 20, 2: 80})
    plan = solve_exact([a, b], table, before, None, avail)
    new, _ = replan(plan, [a, b], table, after, None, avail)

    def served(p, d, c, w):
        return p.assignment.get(("toy", c.id, w), 0.0) * d[("toy", w)]

    # b is the faster replica for class 2 and takes more class-2 requests after the shift
    assert served(new, after, b, 2) > served(plan, before, b, 2)
    assert served(new, after, a, 1) < served(plan, before, a, 1)


def test_plan_document_round_trip(tmp_path):
    g = golden()
    plan = solve_exact(g.configs, g.table, g.demand, g.budget, g.availability)
    plan.save(tmp_path / "p.json")
    back = Plan.load(tmp_path / "p.json")
    assert (back.activations, back.assignment, back.makespan, back.gpu_usage) == (
        plan.activations, plan.assignment, plan.makespan, plan.gpu_usage)
    doc = plan.to_doc()
    assert set(doc) == {"makespan_s", "total_cost_per_h", "activations", "assignment", "gpu_usage", "solver"}
    assert {"mode", "gap", "evaluated_nodes", "wall_s"} <= set(doc["solver"])


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(mode="fast")
    with pytest.raises(ValueError):
        SolverOptions(tolerance=0)
