"""Command-line front end: plan | simulate | enumerate | profile | compare | replan.

Exit codes: 0 success, 1 error, 2 infeasible.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .catalog import (DEFAULT_MODELS, Availability, Budget, CatalogBundle, CatalogError, default_availability,
                      default_catalog, load_catalog)
from .configspace import ConfigError, Enumeration, enumerate_with_diagnostics, parse_config_id
from .costmodel import ProfileError, build_table, load_profile_table, write_profile_table
from .simulator import BASELINES, PlanInputs, SimulationError, baseline, simulate_events
from .solver import InfeasibleError, Plan, SolverOptions, replan, solve
from .workload import (DEFAULT_CLASSES, WorkloadError, classes_from_doc, ingest_trace, load_demand,
                       read_trace)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class CliError(Exception):
    pass


# -- shared input handling ----------------------------------------------------------

def _bundle(args) -> CatalogBundle:
    if args.catalog:
        return load_catalog(args.catalog)
    return CatalogBundle(default_catalog(), default_availability(1), None, DEFAULT_MODELS)


def _classes(args):
    if getattr(args, "classes", None):
        doc = json.loads(Path(args.classes).read_text())
        return classes_from_doc(doc["workload_types"] if isinstance(doc, dict) else doc)
    return None


def _demand(args, bundle):
    classes = _classes(args)
    if getattr(args, "demand", None):
        demand, doc_classes = load_demand(args.demand)
        classes = classes or doc_classes
    elif getattr(args, "trace", None):
        classes = classes or DEFAULT_CLASSES
        demand = ingest_trace(read_trace(args.trace), classes, [m.name for m in bundle.models])
    else:
        raise CliError("give --demand or --trace")
    classes = tuple(classes or DEFAULT_CLASSES)
    known = {c.id for c in classes}
    for (m, w), n in demand.positive().items():
        if w not in known:
            raise CliError(f"demand references unknown workload class {w}")
    return demand, classes


def _budget(args, bundle):
    if getattr(args, "budget", None) is not None:
        return Budget(args.budget)
    if bundle.budget is None:
        raise CliError("no budget: pass --budget or set budget_per_hour in the catalog")
    return bundle.budget


def _options(args) -> SolverOptions:
    return SolverOptions(mode=args.mode, tolerance=args.tolerance, wall_clock_limit=args.wall_clock_limit,
                         enable_pruning=not args.no_pruning, enable_warm_start=not args.no_warm_start,
                         enable_lower_bound_stop=args.lower_bound_stop, feasibility_mode=args.feasibility)


def _models_for(demand, bundle):
    out = []
    for m in demand.models:
        try:
            out.append(bundle.model(m))
        except KeyError:
            raise CliError(f"demand references unknown model {m!r}") from None
    return out


def _configs_and_table(args, bundle, demand, classes, availability):
    models = _models_for(demand, bundle)
    wanted = [c for c in classes if any(w == c.id for (_, w) in demand.positive())]
    profile = load_profile_table(args.profile_table) if getattr(args, "profile_table", None) else None
    if getattr(args, "profile_only", False):
        if profile is None:
            raise CliError("--profile-only needs --profile-table")
        by_name = {m.name: m for m in models}
        ids = sorted({(m, c) for (m, c, _) in profile.rates if m in by_name})
        configs = [parse_config_id(c, by_name[m], bundle.catalog) for m, c in ids]
        return configs, profile, models
    configs = []
    for m in models:
        configs += enumerate_with_diagnostics(bundle.catalog, availability, m, args.max_gpus_per_replica).configs
    table = build_table(configs, wanted, models, bundle.catalog)
    if profile is not None:
        table = table.overlay(profile)
    return configs, table, models


def _manifest(args, command, t0, inputs, options=None) -> dict:
    return {"command": command, "inputs": {k: v for k, v in inputs.items() if v},
            "options": options or {}, "version": __version__, "seed": args.seed,
            "wall_s": time.perf_counter() - t0}


def _emit(args, doc: dict, text: str | None = None) -> None:
    """Document to --out (summary on stdout) or to stdout (summary on stderr)."""
    body = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(body)
    else:
        sys.stdout.write(body)
    if text is not None and not args.quiet:
        print(text, file=sys.stdout if args.out else sys.stderr)


def _plan_setup(args):
    bundle = _bundle(args)
    demand, classes = _demand(args, bundle)
    demand.require_positive()
    budget = _budget(args, bundle)
    configs, table, models = _configs_and_table(args, bundle, demand, classes, bundle.availability)
    return bundle, demand, classes, budget, configs, table, models


def _option_doc(opts: SolverOptions, args) -> dict:
    d = dict(vars(opts))
    d["max_gpus_per_replica"] = args.max_gpus_per_replica
    return d


# -- commands -----------------------------------------------------------------

def cmd_plan(args) -> int:
    t0 = time.perf_counter()
    bundle, demand, classes, budget, configs, table, models = _plan_setup(args)
    opts = _options(args)
    plan = solve(configs, table, demand, budget, bundle.availability, opts, models)
    doc = {"manifest": _manifest(args, "plan", t0, _input_paths(args), _option_doc(opts, args)),
           "plan": plan.to_doc()}
    _emit(args, doc, plan.summary())
    return EXIT_OK


def cmd_compare(args) -> int:
    t0 = time.perf_counter()
    bundle, demand, classes, budget, configs, table, models = _plan_setup(args)
    opts = _options(args)
    rebuild = None if args.profile_only else (lambda cs: build_table(cs, classes, models, bundle.catalog))
    inputs = PlanInputs(bundle.catalog, bundle.availability, budget, models, demand, configs, table, opts,
                        rebuild, args.max_gpus_per_replica)
    opt = inputs.solve()
    rows = [_row("optimized", opt, demand, opt.makespan)]
    for kind in args.baselines:
        try:
            p = baseline(inputs, kind, optimized=opt)
            rows.append(_row(kind, p, demand, opt.makespan))
        except InfeasibleError as e:
            rows.append({"variant": kind, "makespan_s": None, "throughput_rps": None, "cost_per_h": None,
                         "delta_pct": None, "note": f"infeasible ({e.cause}): {e}"})
    doc = {"manifest": _manifest(args, "compare", t0, _input_paths(args), _option_doc(opts, args)),
           "rows": rows}
    _emit(args, doc, _compare_text(rows))
    return EXIT_OK


def _row(name, plan, demand, ref):
    T = plan.makespan
    return {"variant": name, "makespan_s": T, "throughput_rps": demand.total() / T,
            "cost_per_h": plan.total_cost, "delta_pct": (T / ref - 1.0) * 100.0}


def _compare_text(rows) -> str:
    head = f"{'variant':<26} {'makespan_s':>12} {'throughput':>12} {'cost_$/h':>10} {'delta_%':>9}"
    lines = [head]
    for r in rows:
        if r["makespan_s"] is None:
            lines.append(f"{r['variant']:<26} {r['note']}")
        else:
            lines.append(f"{r['variant']:<26} {r['makespan_s']:>12.3f} {r['throughput_rps']:>12.4f} "
                         f"{r['cost_per_h']:>10.2f} {r['delta_pct']:>9.2f}")
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    bundle = _bundle(args)
    plan = Plan.load(args.plan)
    classes = _classes(args)
    if classes is None and args.demand:
        classes = load_demand(args.demand)[1]
    classes = tuple(classes or DEFAULT_CLASSES)
    trace = read_trace(args.trace)
    if args.profile_table:
        table = load_profile_table(args.profile_table)
    else:
        names = {m for m, _ in plan.activations}
        configs = [parse_config_id(c, bundle.model(m), bundle.catalog) for m, c in plan.activations if m in names]
        table = build_table(configs, classes, list(bundle.models), bundle.catalog)
    report = simulate_events(plan, trace, table, seed=args.seed, classes=classes, dispatch=args.dispatch)
    if args.log:
        report.write_log(args.log)
    doc = {"manifest": _manifest(args, "simulate", t0, {"plan": args.plan, "trace": args.trace,
                                                       "catalog": args.catalog, "profile_table": args.profile_table},
                                 {"dispatch": args.dispatch}),
           "report": report.to_doc()}
    _emit(args, doc, report.to_text())
    return EXIT_OK


def cmd_enumerate(args) -> int:
    t0 = time.perf_counter()
    bundle = _bundle(args)
    models = [bundle.model(args.model)] if args.model else list(bundle.models)
    records, pruned = [], {}
    for m in models:
        en: Enumeration = enumerate_with_diagnostics(bundle.catalog, bundle.availability, m,
                                                     args.max_gpus_per_replica)
        for c in en.configs:
            records.append({"model": c.model, "config_id": c.id, "cost": c.cost,
                            "stages": [{"type": s.gpu_type, "tp": s.tp_degree, "layers": s.layer_count}
                                       for s in c.stages]})
        pruned[m.name] = en.pruned
    doc = {"manifest": _manifest(args, "enumerate", t0, {"catalog": args.catalog},
                                 {"max_gpus_per_replica": args.max_gpus_per_replica}),
           "configs": records, "pruned": pruned}
    text = f"{len(records)} configurations" + "".join(
        f"\n  {m}: {sum(r['model'] == m for r in records)} kept, {len(p)} GPU-count families pruned"
        for m, p in pruned.items())
    _emit(args, doc, text)
    return EXIT_OK


def cmd_profile(args) -> int:
    bundle = _bundle(args)
    classes = tuple(_classes(args) or DEFAULT_CLASSES)
    models = [bundle.model(args.model)] if args.model else list(bundle.models)
    configs = []
    for m in models:
        configs += enumerate_with_diagnostics(bundle.catalog, bundle.availability, m,
                                              args.max_gpus_per_replica).configs
    table = build_table(configs, classes, models, bundle.catalog)
    if args.out:
        write_profile_table(args.out, table)
    else:
        sys.stdout.write(json.dumps({"records": table.to_records()}, indent=2) + "\n")
    if not args.quiet:
        print(f"{len(table)} rates for {len(configs)} configurations x {len(classes)} classes",
              file=sys.stderr)
    return EXIT_OK


def _parse_availability(args, bundle) -> Availability:
    counts = dict(bundle.availability.counts)
    if args.availability:
        text = args.availability
        raw = json.loads(text if text.lstrip().startswith("{") else Path(text).read_text())
        counts = {k: int(v) for k, v in raw.items()}
    for item in args.drop or []:
        t, _, n = item.partition("=")
        if t not in bundle.catalog:
            raise CliError(f"--drop: unknown GPU type {t!r}")
        counts[t] = max(0, counts.get(t, 0) - int(n))
    avail = Availability(counts)
    avail.validate(bundle.catalog)
    return avail


def cmd_replan(args) -> int:
    t0 = time.perf_counter()
    bundle = _bundle(args)
    previous = Plan.load(args.previous)
    demand, classes = _demand(args, bundle)
    demand.require_positive()
    budget = _budget(args, bundle)
    avail = _parse_availability(args, bundle)
    configs, table, models = _configs_and_table(args, bundle, demand, classes, bundle.availability)
    configs = [c for c in configs if all(n <= avail[t] for t, n in c.gpu_counts.items())]
    opts = _options(args)
    plan, delta = replan(previous, configs, table, demand, budget, avail, opts, models)
    doc = {"manifest": _manifest(args, "replan", t0, {**_input_paths(args), "previous": args.previous},
                                 _option_doc(opts, args)),
           "plan": plan.to_doc(), "delta": delta.to_doc()}
    text = plan.summary() + (
        f"\nthroughput: original {delta.throughput_original:.4f}  degraded {delta.throughput_degraded:.4f}"
        f"  replanned {delta.throughput_replanned:.4f} req/s")
    _emit(args, doc, text)
    return EXIT_OK


def _input_paths(args) -> dict:
    return {k: getattr(args, k, None) for k in ("catalog", "demand", "trace", "classes", "profile_table")}


# -- parser -------------------------------------------------------------------

def _solver_flags(p):
    p.add_argument("--demand", help="demand document {demand: [...], workload_types: [...]}")
    p.add_argument("--trace", help="request trace, one JSON record per line")
    p.add_argument("--classes", help="workload class list (JSON) used to bucket a trace")
    p.add_argument("--budget", type=float, help="USD/hour; overrides the catalog budget")
    p.add_argument("--mode", choices=["exact", "binary_search"], default="exact")
    p.add_argument("--tolerance", type=float, default=1.0, help="binary-search tolerance in seconds")
    p.add_argument("--feasibility", choices=["exact_lp", "knapsack_greedy"], default="exact_lp")
    p.add_argument("--max-gpus-per-replica", type=int, default=8)
    p.add_argument("--wall-clock-limit", type=float, default=600.0)
    p.add_argument("--profile-table", help="measured rates; override analytic estimates")
    p.add_argument("--profile-only", action="store_true",
                   help="use only configurations present in the profile table")
    p.add_argument("--no-pruning", action="store_true")
    p.add_argument("--no-warm-start", action="store_true")
    p.add_argument("--lower-bound-stop", action="store_true")


def _global_flags(p, suppress: bool):
    # subcommands repeat the global flags; SUPPRESS keeps a value given before the subcommand
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--catalog", default=d(None),
                   help="catalog document (default: built-in GPU table, snapshot 1)")
    p.add_argument("--out", default=d(None), help="write the output document here instead of stdout")
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--quiet", action="store_true", default=d(False), help="no human-readable summary")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    ap = argparse.ArgumentParser(prog="hetserve", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    _global_flags(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[common], help="compute a serving plan")
    _solver_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("compare", parents=[common], help="optimized plan against ablation baselines")
    _solver_flags(p)
    p.add_argument("--baselines", nargs="+", default=list(BASELINES),
                   help=f"any of {', '.join(BASELINES)}, homogeneous:<type>")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", parents=[common], help="event-driven replay of a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--classes")
    p.add_argument("--demand", help="demand document whose workload_types define the classes")
    p.add_argument("--profile-table")
    p.add_argument("--dispatch", choices=["quota", "random"], default="quota")
    p.add_argument("--log", help="per-request CSV log")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("enumerate", parents=[common], help="list feasible configurations")
    p.add_argument("--model")
    p.add_argument("--max-gpus-per-replica", type=int, default=8)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("profile", parents=[common], help="write an analytic rate table")
    p.add_argument("--model")
    p.add_argument("--classes")
    p.add_argument("--max-gpus-per-replica", type=int, default=8)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("replan", parents=[common], help="re-solve after GPU loss or demand shift")
    _solver_flags(p)
    p.add_argument("--previous", required=True, help="previous plan document")
    p.add_argument("--availability", help="new availability (JSON mapping or file)")
    p.add_argument("--drop", action="append", metavar="TYPE=N", help="remove N GPUs of TYPE")
    p.set_defaults(func=cmd_replan)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as e:
        print(f"infeasible ({e.cause}): {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (CliError, CatalogError, ConfigError, ProfileError, WorkloadError, SimulationError,
            FileNotFoundError, KeyError, ValueError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
