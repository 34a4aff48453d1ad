"""Three GPU types, two workload classes: compositions, exact optimum, binary search, replay."""

from pathlib import Path

from hetserve.catalog import load_catalog
from hetserve.configspace import parse_config_id
from hetserve.costmodel import load_profile_table
from hetserve.simulator import evaluate_analytic, simulate_events
from hetserve.solver import Plan, SolverOptions, binary_search_on_T, proportional_assign, solve_exact
from hetserve.workload import load_demand, read_trace

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures" / "simple_example"


def main():
    bundle = load_catalog(FIXTURES / "catalog.json")
    model = bundle.models[0]
    table = load_profile_table(FIXTURES / "profile.json")
    configs = {c: parse_config_id(c, model, bundle.catalog) for c in ("t1", "t2", "t3", "t2x2")}
    demand, classes = load_demand(FIXTURES / "demand.json")

    print("proportional assignment")
    for name, active in [("t1 + t2 + t3", {"t1": 1, "t2": 1, "t3": 1}),
                         ("t1 + 2 x t2", {"t1": 1, "t2": 2}),
                         ("t1 + t2 TP pair", {"t1": 1, "t2x2": 1})]:
        _, T = proportional_assign([(configs[c], n) for c, n in active.items()], table, demand)
        print(f"  {name:<18} {T:8.3f} s")

    args = (list(configs.values()), table, demand, bundle.budget, bundle.availability)
    plan = solve_exact(*args)
    print("\nexact optimum\n" + plan.summary())
    bs = binary_search_on_T(*args, SolverOptions(mode="binary_search", tolerance=0.01))
    print(f"\nbinary search (tolerance 0.01 s): {bs.makespan:.3f} s, "
          f"{bs.solver['evaluated_nodes']} LPs vs {plan.solver['evaluated_nodes']} for exact")

    ref = Plan.load(FIXTURES / "plan_case3.json")
    print(f"\nrounded 15/85 plan: analytic {evaluate_analytic(ref, table, demand):.3f} s")
    report = simulate_events(ref, read_trace(FIXTURES / "trace.jsonl"), table, classes=classes)
    print(f"event replay of that plan: {report.makespan:.3f} s, p50 latency "
          f"{report.latency_percentiles['p50']:.2f} s")


if __name__ == "__main__":
    main()
