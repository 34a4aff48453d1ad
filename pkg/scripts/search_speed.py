"""Binary search on T against branch and bound: makespan deviation, LP counts, wall time."""

import argparse
import time

import numpy as np

from hetserve.solver import SolverOptions, binary_search_on_T, makespan_bounds, solve_exact
from hetserve.synthetic import medium_instance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=30)
    ap.add_argument("--rel-tolerance", type=float, default=0.01, help="tolerance as a fraction of T_lo")
    args = ap.parse_args()
    rows = []
    print(f"{'seed':>4} {'configs':>7} {'exact_s':>9} {'bs_s':>9} {'dev_%':>7} {'lps_exact':>9} {'lps_bs':>7}")
    for seed in range(args.instances):
        inst = medium_instance(seed)
        a = (inst.configs, inst.table, inst.demand, inst.budget, inst.availability)
        t0 = time.perf_counter()
        ex = solve_exact(*a)
        t1 = time.perf_counter()
        lo, _ = makespan_bounds(inst.configs, inst.table, inst.demand, inst.availability, inst.budget)
        bs = binary_search_on_T(*a, SolverOptions(mode="binary_search", tolerance=args.rel_tolerance * lo))
        t2 = time.perf_counter()
        dev = 100 * (bs.makespan - ex.makespan) / ex.makespan
        rows.append((t1 - t0, t2 - t1, ex.solver["evaluated_nodes"], bs.solver["evaluated_nodes"], dev))
        print(f"{seed:>4} {len(inst.configs):>7} {ex.makespan:>9.2f} {bs.makespan:>9.2f} {dev:>7.3f} "
              f"{ex.solver['evaluated_nodes']:>9} {bs.solver['evaluated_nodes']:>7}")
    r = np.array(rows)
    print(f"\nworst deviation {r[:, 4].max():.3f}%   LP count ratio (median) {np.median(r[:, 2] / r[:, 3]):.2f}x"
          f"   wall-time ratio (median) {np.median(r[:, 0] / r[:, 1]):.2f}x")


if __name__ == "__main__":
    main()
