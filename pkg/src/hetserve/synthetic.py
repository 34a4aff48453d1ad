"""Random planning instances for fuzzing and experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import Availability, Budget, GpuCatalog, GpuType, ModelSpec
from .configspace import Configuration
from .costmodel import ThroughputTable
from .workload import DemandMatrix


@dataclass
class Instance:
    catalog: GpuCatalog
    availability: Availability
    budget: Budget | None
    models: list[ModelSpec]
    configs: list[Configuration]
    table: ThroughputTable
    demand: DemandMatrix


def toy_model(name: str = "toy", layers: int = 16) -> ModelSpec:
    return ModelSpec(name, layers, 1e9, 2e9, 1e4, 1.0)


def toy_catalog(n_types: int, rng: np.random.Generator, zone: str = "default",
                prefix: str = "g") -> GpuCatalog:
    return GpuCatalog(tuple(
        GpuType(f"{prefix}{i}", 100.0, 1000.0, 40.0, float(rng.choice([1, 2, 3, 4, 5])), 4, zone)
        for i in range(n_types)))


def random_configs(model: ModelSpec, catalog: GpuCatalog, n: int, rng: np.random.Generator,
                   max_stages: int = 2) -> list[Configuration]:
    """Up to ``n`` distinct configurations of 1..max_stages stages with TP 1 or 2."""
    names = catalog.names
    out: dict[str, Configuration] = {}
    for _ in range(20 * n):
        if len(out) >= n:
            break
        stages = int(rng.integers(1, max_stages + 1))
        groups = [(names[int(rng.integers(len(names)))], int(rng.choice([1, 2]))) for _ in range(stages)]
        groups.sort(key=lambda g: (names.index(g[0]), -g[1]))
        c = Configuration.build(model, groups, catalog)
        out.setdefault(c.id, c)
    return sorted(out.values(), key=lambda c: (c.cost, c.id))


def random_instance(seed: int, max_types: int = 3, max_avail: int = 3, max_configs: int = 4,
                    max_classes: int = 3, rate_range=(0.1, 5.0), budget: bool = True,
                    max_stages: int = 2) -> Instance:
    """Small single-model instance with uniformly random rates.

    Each class gets between 10 and 100 requests; the budget lies between
    the cheapest configuration and the cost of using every available GPU.
    """
    rng = np.random.default_rng(seed)
    cat = toy_catalog(int(rng.integers(1, max_types + 1)), rng)
    avail = Availability({t.name: int(rng.integers(1, max_avail + 1)) for t in cat})
    model = toy_model()
    configs = random_configs(model, cat, int(rng.integers(1, max_configs + 1)), rng, max_stages)
    configs = [c for c in configs if all(n <= avail[t] for t, n in c.gpu_counts.items())]
    if not configs:
        configs = [Configuration.build(model, [(cat.names[0], 1)], cat)]
    W = int(rng.integers(1, max_classes + 1))
    lo, hi = rate_range
    rates = {}
    for c in configs:
        for w in range(1, W + 1):
            rates[(model.name, c.id, w)] = float(rng.uniform(lo, hi))
    demand = DemandMatrix.single(model.name, {w: int(rng.integers(10, 101)) for w in range(1, W + 1)})
    B = None
    if budget:
        full = sum(t.price * avail[t.name] for t in cat)
        cheap = min(c.cost for c in configs)
        B = Budget(float(rng.uniform(cheap, max(cheap, full))))
    return Instance(cat, avail, B, [model], configs, ThroughputTable(rates), demand)


def medium_instance(seed: int, max_types: int = 6, max_configs: int = 20, max_classes: int = 3,
                    max_avail: int = 4) -> Instance:
    """Larger instance for binary-search vs exact comparisons (<= 6 types, <= 20 configs)."""
    rng = np.random.default_rng(seed)
    n_types = int(rng.integers(3, max_types + 1))
    cat = toy_catalog(n_types, rng)
    avail = Availability({t.name: int(rng.integers(2, max_avail + 1)) for t in cat})
    model = toy_model()
    configs = random_configs(model, cat, int(rng.integers(8, max_configs + 1)), rng)
    configs = [c for c in configs if all(n <= avail[t] for t, n in c.gpu_counts.items())]
    W = int(rng.integers(2, max_classes + 1))
    # rates scale with GPU count, with per-type/per-class affinity
    affinity = rng.uniform(0.3, 2.0, size=(n_types, W))
    rates = {}
    for c in configs:
        for w in range(W):
            base = sum(n * affinity[cat.index(t), w] for t, n in c.gpu_counts.items())
            rates[(model.name, c.id, w + 1)] = float(base * rng.uniform(0.7, 1.1))
    demand = DemandMatrix.single(model.name, {w: int(rng.integers(50, 501)) for w in range(1, W + 1)})
    full = sum(t.price * avail[t.name] for t in cat)
    B = Budget(float(rng.uniform(0.3, 0.7) * full))
    return Instance(cat, avail, B, [model], configs, ThroughputTable(rates), demand)


def two_model_disjoint(seed: int) -> Instance:
    """Two models whose configurations use disjoint GPU types; budget never binds."""
    rng = np.random.default_rng(seed)
    a = toy_catalog(2, rng, prefix="a")
    b = toy_catalog(2, rng, prefix="b")
    cat = GpuCatalog(a.types + b.types)
    avail = Availability({t.name: int(rng.integers(1, 4)) for t in cat})
    m1, m2 = toy_model("m1"), toy_model("m2")
    configs = random_configs(m1, a, 3, rng) + random_configs(m2, b, 3, rng)
    configs = [c for c in configs if all(n <= avail[t] for t, n in c.gpu_counts.items())]
    for m, sub in ((m1, a), (m2, b)):
        if not any(c.model == m.name for c in configs):
            configs.append(Configuration.build(m, [(sub.names[0], 1)], cat))
    rates, dem = {}, {}
    for c in configs:
        for w in (1, 2):
            rates[(c.model, c.id, w)] = float(rng.uniform(0.1, 5.0))
    for m in ("m1", "m2"):
        for w in (1, 2):
            dem[(m, w)] = int(rng.integers(10, 101))
    return Instance(cat, avail, None, [m1, m2], configs, ThroughputTable(rates), DemandMatrix(dem))


def catalog_instance(seed: int, max_gpus_per_replica: int = 4) -> Instance:
    """Three types from the default catalog (4-GPU machines), an 8B model and analytic rates."""
    from dataclasses import replace

    from .catalog import LLAMA3_8B, default_catalog
    from .configspace import enumerate_configs
    from .costmodel import build_table
    from .workload import DEFAULT_CLASSES

    rng = np.random.default_rng(seed)
    full = default_catalog()
    pick = sorted(rng.choice(len(full), size=3, replace=False))
    cat = GpuCatalog(tuple(replace(full.types[i], gpus_per_machine=4) for i in pick))
    avail = Availability({t.name: int(rng.integers(4, 9)) for t in cat})
    ids = sorted(rng.choice(len(DEFAULT_CLASSES), size=3, replace=False))
    classes = [DEFAULT_CLASSES[i] for i in ids]
    configs = enumerate_configs(cat, avail, LLAMA3_8B, max_gpus_per_replica)
    table = build_table(configs, classes, [LLAMA3_8B], cat)
    demand = DemandMatrix.single(LLAMA3_8B.name, {c.id: int(rng.integers(100, 2001)) for c in classes})
    total = sum(t.price * avail[t.name] for t in cat)
    return Instance(cat, avail, Budget(float(rng.uniform(0.4, 0.8) * total)), [LLAMA3_8B], configs, table, demand)
