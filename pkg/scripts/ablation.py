"""Optimized plan against the three ablation baselines on synthetic catalog instances."""

import argparse
import math

import numpy as np

from hetserve.simulator import BASELINES, PlanInputs, baseline
from hetserve.solver import InfeasibleError
from hetserve.synthetic import catalog_instance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=20)
    args = ap.parse_args()
    ratios = {k: [] for k in BASELINES}
    print(f"{'seed':>4} {'optimized_s':>12} " + " ".join(f"{k:>24}" for k in BASELINES))
    for seed in range(args.instances):
        inst = catalog_instance(seed)
        inputs = PlanInputs(inst.catalog, inst.availability, inst.budget, inst.models, inst.demand,
                            inst.configs, inst.table)
        opt = inputs.solve()
        cells = []
        for kind in BASELINES:
            try:
                T = baseline(inputs, kind, opt).makespan
                ratios[kind].append(T / opt.makespan)
                cells.append(f"{T:>16.2f} ({T / opt.makespan:4.2f}x)")
            except InfeasibleError as e:
                cells.append(f"{'infeasible: ' + e.cause:>24}")
        print(f"{seed:>4} {opt.makespan:>12.2f} " + " ".join(cells))
    print("\ngeometric-mean makespan increase over optimized")
    for k, r in ratios.items():
        print(f"  {k:<24} {100 * (math.exp(np.mean(np.log(r))) - 1):6.1f}%  ({len(r)} instances)")


if __name__ == "__main__":
    main()
