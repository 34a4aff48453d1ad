"""Analytic throughput of the measured H100/L40 layouts (long input, short output)."""

from dataclasses import replace

from hetserve.catalog import LLAMA3_70B, GpuCatalog, default_catalog
from hetserve.configspace import Configuration
from hetserve.costmodel import estimate_throughput
from hetserve.workload import DEFAULT_CLASSES

MEASURED = {("H100", "(2,4)"): 0.56, ("H100", "(4,2)"): 0.44, ("H100", "(4,2) cross"): 0.42,
            ("L40", "(2,4)"): 0.42, ("L40", "(4,2)"): 0.21, ("L40", "(4,2) cross"): 0.18}


def main():
    # 8-GPU L40 machines so that the single-machine (2,4) and (4,2) layouts exist
    cat = GpuCatalog(tuple(replace(t, gpus_per_machine=8) if t.name == "L40" else t for t in default_catalog()))
    w = DEFAULT_CLASSES[0]
    print(f"{'layout':<20} {'config id':<30} {'estimated':>10} {'measured':>9}")
    for t in ("H100", "L40"):
        for name, groups, machines in [("(2,4)", [(t, 2)] * 4, [0] * 4), ("(4,2)", [(t, 4)] * 2, [0, 0]),
                                       ("(4,2) cross", [(t, 4)] * 2, [0, 1])]:
            c = Configuration.build(LLAMA3_70B, groups, cat, machines)
            h = estimate_throughput(c, LLAMA3_70B, w, cat)
            print(f"{t + ' ' + name:<20} {c.id:<30} {h:>10.3f} {MEASURED[(t, name)]:>9.2f}")
    print("\nrates are req/s; only the ordering within each GPU type is meant to agree")


if __name__ == "__main__":
    main()
