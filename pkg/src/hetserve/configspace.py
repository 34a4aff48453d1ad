"""Per-replica deployment configurations and their enumeration.

A configuration is an ordered list of pipeline stages; each stage is one
tensor-parallel group of a single GPU type living inside one machine.
Data parallelism never appears here: identical replicas are expressed by
activation counts in the solver.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .catalog import Availability, GpuCatalog, ModelSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StageSpec:
    gpu_type: str
    tp_degree: int
    layer_count: int
    machine: int = 0  # machine index among this replica's machines of gpu_type

    def token(self) -> str:
        return self.gpu_type if self.tp_degree == 1 else f"{self.gpu_type}x{self.tp_degree}"


def layout_id(stages: Sequence[StageSpec]) -> str:
    """Stable text id, e.g. ``H100x4|H100x4`` (one machine) or ``H100x4/A100x4``."""
    out = stages[0].token()
    for prev, cur in zip(stages, stages[1:]):
        same = prev.gpu_type == cur.gpu_type and prev.machine == cur.machine
        out += ("|" if same else "/") + cur.token()
    return out


@dataclass(frozen=True)
class Configuration:
    model: str
    stages: tuple[StageSpec, ...]
    gpu_counts: dict = field(compare=False, hash=False)
    cost: float = field(compare=False, hash=False)

    @property
    def id(self) -> str:
        return layout_id(self.stages)

    @property
    def key(self) -> tuple[str, str]:
        return (self.model, self.id)

    @property
    def num_gpus(self) -> int:
        return sum(s.tp_degree for s in self.stages)

    @property
    def tp_layout(self) -> tuple[int, ...]:
        return tuple(s.tp_degree for s in self.stages)

    def __repr__(self):
        return f"Configuration({self.model}:{self.id}, ${self.cost:g}/h)"

    @classmethod
    def build(cls, model: ModelSpec, groups: Sequence[tuple[str, int]], catalog: GpuCatalog,
              machines: Sequence[int] | None = None) -> "Configuration":
        """Configuration from ``[(gpu_type, tp_degree), ...]`` in pipeline order.

        Layers are split by stage memory.  Without ``machines`` stages are
        packed first-fit onto machines of their type.
        """
        if not groups:
            raise ConfigError("a configuration needs at least one stage")
        if len(groups) > model.num_layers:
            raise ConfigError(f"{len(groups)} stages exceed {model.num_layers} layers")
        mems = [tp * catalog[t].mem_capacity for t, tp in groups]
        layers = partition_layers(model.num_layers, mems)
        if machines is None:
            machines = compact_placement(groups, catalog)
        stages = tuple(StageSpec(t, tp, n, m) for (t, tp), n, m in zip(groups, layers, machines))
        counts: dict[str, int] = {}
        for s in stages:
            counts[s.gpu_type] = counts.get(s.gpu_type, 0) + s.tp_degree
        counts = {t.name: counts[t.name] for t in catalog if t.name in counts}
        cfg = cls(model.name, stages, counts, 0.0)
        object.__setattr__(cfg, "cost", config_cost(cfg, catalog))
        return cfg


_TOKEN = re.compile(r"^(.+?)(?:x(\d+))?$")


def parse_config_id(config_id: str, model: ModelSpec, catalog: GpuCatalog) -> Configuration:
    """Inverse of ``Configuration.id`` (layers are re-derived from stage memory)."""
    parts = re.split(r"([|/])", config_id)
    groups, machines = [], []
    seen: dict[str, int] = {}
    for i in range(0, len(parts), 2):
        m = _TOKEN.match(parts[i])
        if not m or m.group(1) not in catalog:
            raise ConfigError(f"bad configuration id {config_id!r}: unknown stage {parts[i]!r}")
        t, tp = m.group(1), int(m.group(2) or 1)
        if i and parts[i - 1] == "|" and groups[-1][0] == t:
            machine = machines[-1]
        elif t in seen:
            machine = seen[t] + 1
        else:
            machine = 0
        seen[t] = max(seen.get(t, 0), machine)
        groups.append((t, tp))
        machines.append(machine)
    cfg = Configuration.build(model, groups, catalog, machines)
    if cfg.id != config_id:
        raise ConfigError(f"configuration id {config_id!r} is not canonical (parsed as {cfg.id!r})")
    return cfg


def compact_placement(groups: Sequence[tuple[str, int]], catalog: GpuCatalog) -> list[int]:
    used: dict[str, list[int]] = {}
    out = []
    for t, tp in groups:
        cap = catalog[t].gpus_per_machine
        fill = used.setdefault(t, [])
        for i, u in enumerate(fill):
            if u + tp <= cap:
                fill[i] += tp
                out.append(i)
                break
        else:
            fill.append(tp)
            out.append(len(fill) - 1)
    return out


def config_cost(config: Configuration, catalog: GpuCatalog) -> float:
    """Hourly price of one replica: sum over types of count x price."""
    return float(sum(n * catalog[t].price for t, n in config.gpu_counts.items()))


def partition_layers(num_layers: int, stage_memories: Sequence[float]) -> list[int]:
    """Split layers across pipeline stages in proportion to stage memory.

    Largest-remainder rounding, ties to the lower stage index.  A stage
    rounded down to zero takes a layer from the stage holding the most
    layers above its exact quota.
    """
    S = len(stage_memories)
    if S == 0:
        raise ConfigError("need at least one stage")
    if S > num_layers:
        raise ConfigError(f"{S} stages exceed {num_layers} layers")
    mem = np.asarray(stage_memories, dtype=float)
    if (mem <= 0).any():
        raise ConfigError("stage memories must be > 0")
    exact = mem / mem.sum() * num_layers
    counts = np.floor(exact).astype(int)
    frac = exact - counts
    rest = num_layers - int(counts.sum())
    for i in sorted(range(S), key=lambda i: (-frac[i], i))[:rest]:
        counts[i] += 1
    while (counts == 0).any():
        z = int(np.flatnonzero(counts == 0)[0])
        surplus = np.where(counts > 1, counts - exact, -np.inf)
        donor = int(np.argmax(surplus))
        counts[donor] -= 1
        counts[z] += 1
    return counts.tolist()


def check_config(config: Configuration, model: ModelSpec, catalog: GpuCatalog,
                 availability: Availability | None = None) -> list[str]:
    """All structural/memory violations of ``config``; empty when valid."""
    bad = []
    if config.model != model.name:
        bad.append(f"model {config.model} != {model.name}")
    if sum(s.tp_degree for s in config.stages) != sum(config.gpu_counts.values()):
        bad.append("stage TP degrees do not sum to GPU count")
    if sum(s.layer_count for s in config.stages) != model.num_layers:
        bad.append("layer counts do not sum to num_layers")
    if any(s.layer_count < 1 for s in config.stages):
        bad.append("stage without layers")
    total_mem = 0.0
    for s in config.stages:
        g = catalog[s.gpu_type]
        if s.tp_degree > g.gpus_per_machine:
            bad.append(f"TP {s.tp_degree} exceeds machine size of {g.name}")
        need = model.weight_gb * model.mem_overhead_factor * s.layer_count / model.num_layers
        if need > s.tp_degree * g.mem_capacity + 1e-9:
            bad.append(f"stage on {g.name}x{s.tp_degree} needs {need:.1f} GB")
        total_mem += s.tp_degree * g.mem_capacity
    if total_mem < model.min_replica_memory - 1e-9:
        bad.append(f"aggregate memory {total_mem:g} GB < {model.min_replica_memory:g} GB")
    if len({catalog[t].zone for t in config.gpu_counts}) > 1:
        bad.append("GPUs span more than one zone")
    if availability is not None:
        for t, n in config.gpu_counts.items():
            if n > availability[t]:
                bad.append(f"uses {n} {t} but only {availability[t]} available")
    return bad


def tp_groupings(n: int, max_tp: int) -> list[tuple[int, ...]]:
    """Multisets of power-of-two group sizes (each <= max_tp) summing to n, largest first."""
    sizes = [1 << k for k in range(max_tp.bit_length()) if (1 << k) <= max_tp][::-1]
    out: list[tuple[int, ...]] = []

    def rec(left, start, acc):
        if left == 0:
            out.append(tuple(acc))
            return
        for i in range(start, len(sizes)):
            if sizes[i] <= left:
                acc.append(sizes[i])
                rec(left - sizes[i], i, acc)
                acc.pop()

    rec(n, 0, [])
    return out


def _family(catalog: GpuCatalog, counts: dict[str, int]) -> str:
    return "+".join(f"{t}x{n}" for t, n in counts.items())


@dataclass
class Enumeration:
    configs: list[Configuration]
    pruned: dict[str, str]  # GPU-count family -> reason


def enumerate_with_diagnostics(catalog: GpuCatalog, availability: Availability, model: ModelSpec,
                               max_gpus_per_replica: int = 8) -> Enumeration:
    if max_gpus_per_replica < 1:
        raise ConfigError("max_gpus_per_replica must be >= 1")
    types = [t for t in catalog if availability[t.name] > 0]
    limits = [min(availability[t.name], max_gpus_per_replica) for t in types]
    configs: list[Configuration] = []
    pruned: dict[str, str] = {}
    for vec in itertools.product(*(range(l + 1) for l in limits)):
        total = sum(vec)
        if total == 0 or total > max_gpus_per_replica:
            continue
        counts = {t.name: d for t, d in zip(types, vec) if d}
        fam = _family(catalog, counts)
        if len({catalog[t].zone for t in counts}) > 1:
            pruned[fam] = "GPUs in different zones"
            continue
        mem = sum(catalog[t].mem_capacity * d for t, d in counts.items())
        if mem < model.min_replica_memory:
            pruned[fam] = f"memory {mem:g} GB < {model.min_replica_memory:g} GB required"
            continue
        per_type = [[(t, g) for g in tp_groupings(d, catalog[t].gpus_per_machine)] for t, d in counts.items()]
        found = 0
        for choice in itertools.product(*per_type):
            groups = [(t, tp) for t, g in choice for tp in g]
            if len(groups) > model.num_layers:
                continue
            cfg = Configuration.build(model, groups, catalog)
            if not check_config(cfg, model, catalog):
                configs.append(cfg)
                found += 1
        if not found:
            pruned[fam] = "no stage layout fits the weights per stage"
    configs.sort(key=lambda c: (c.cost, c.id))
    return Enumeration(configs, pruned)


def enumerate_configs(catalog: GpuCatalog, availability: Availability, model: ModelSpec,
                      max_gpus_per_replica: int = 8) -> list[Configuration]:
    """Feasible configurations sorted by (cost, layout id).

    Use ``enumerate_with_diagnostics`` to see why GPU-count families were dropped.
    """
    return enumerate_with_diagnostics(catalog, availability, model, max_gpus_per_replica).configs


def prune_dominated(configs: Sequence[Configuration], table, classes: Iterable[int] | None = None
                    ) -> list[Configuration]:
    """Drop configurations some other configuration of the same model dominates.

    ``c2`` dominates ``c`` when it costs no more, uses no more GPUs of any
    type, is at least as fast on every class (absent rate = 0), and is
    strictly better on at least one of those.
    """
    configs = list(configs)
    keep = [True] * len(configs)
    types = sorted({t for c in configs for t in c.gpu_counts})
    by_model: dict[str, list[int]] = {}
    for i, c in enumerate(configs):
        by_model.setdefault(c.model, []).append(i)
    for model, idx in by_model.items():
        ws = sorted(set(classes) if classes is not None else table.workloads(model))
        # columns: -cost, -usage..., rates...  (larger is better everywhere)
        M = np.array([[-configs[i].cost] + [-configs[i].gpu_counts.get(t, 0) for t in types]
                      + [table.rate(model, configs[i].id, w) or 0.0 for w in ws] for i in idx])
        ge = (M[:, None, :] >= M[None, :, :]).all(axis=2)
        gt = (M[:, None, :] > M[None, :, :]).any(axis=2)
        dom = ge & gt  # dom[a, b]: a dominates b
        for b_pos, b in enumerate(idx):
            if dom[:, b_pos].any():
                keep[b] = False
    return [c for c, k in zip(configs, keep) if k]
