"""Analytic (roofline) throughput estimates and measured profile tables.

Prefill is treated as compute-bound and decode as memory-bandwidth-bound.
A replica's throughput is the smaller of its pipelined prefill rate and its
batched decode rate, where the decode batch is limited by free KV memory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .catalog import GpuCatalog, ModelSpec
from .configspace import Configuration
from .workload import WorkloadType


class ProfileError(ValueError):
    pass


NVLINK_GBPS = 300.0
PCIE_GBPS = 60.0
ETHERNET_GBPS = 5.0 / 8  # 5 Gb/s


@dataclass(frozen=True)
class CommParams:
    tp_link_bw: float = PCIE_GBPS  # GB/s inside a machine
    pp_link_bw: float = ETHERNET_GBPS  # GB/s between machines
    per_message_latency: float = 1e-5  # s
    tp_efficiency: Mapping[int, float] = field(default_factory=lambda: {1: 1.0, 2: 0.90, 4: 0.80, 8: 0.70})
    # GPU types whose machines use a faster intra-machine link than tp_link_bw
    tp_link_overrides: Mapping[str, float] = field(
        default_factory=lambda: {"H100": NVLINK_GBPS, "A100": NVLINK_GBPS})

    def __post_init__(self):
        if not (self.tp_link_bw > 0 and self.pp_link_bw > 0):
            raise ValueError("link bandwidths must be > 0")
        if self.per_message_latency < 0:
            raise ValueError("per_message_latency must be >= 0")
        if self.tp_efficiency.get(1, 1.0) != 1.0:
            raise ValueError("tp_efficiency(1) must be 1")
        if any(not 0 < e <= 1 for e in self.tp_efficiency.values()):
            raise ValueError("tp_efficiency values must lie in (0, 1]")

    def efficiency(self, tp: int) -> float:
        if tp in self.tp_efficiency:
            return self.tp_efficiency[tp]
        lower = [k for k in self.tp_efficiency if k <= tp]
        return self.tp_efficiency[max(lower)] if lower else 1.0

    def intra_bw(self, gpu_type: str) -> float:
        return self.tp_link_overrides.get(gpu_type, self.tp_link_bw)


ZERO_COMM = CommParams(tp_link_bw=math.inf, pp_link_bw=math.inf, per_message_latency=0.0,
                       tp_efficiency={1: 1.0, 2: 1.0, 4: 1.0, 8: 1.0}, tp_link_overrides={})


@dataclass(frozen=True)
class MemParams:
    max_batch: int | None = None  # optional scheduler cap on concurrent sequences


def hidden_size(model: ModelSpec) -> float:
    # square-layer approximation: ~12 h^2 fp16 parameters per layer
    return math.sqrt(model.weight_bytes / model.num_layers / 24.0)


def _activation_bytes(model: ModelSpec, tokens: float) -> float:
    return 2.0 * hidden_size(model) * tokens


def _tp_comm(stage, model, comm: CommParams, tokens) -> float:
    t = stage.tp_degree
    if t == 1:
        return 0.0
    # two ring all-reduces per layer
    per = 2 * (t - 1) / t * _activation_bytes(model, tokens) / (comm.intra_bw(stage.gpu_type) * 1e9)
    return stage.layer_count * 2 * (per + comm.per_message_latency)


def _boundary(prev, cur, model, comm: CommParams, tokens) -> float:
    same_machine = prev.gpu_type == cur.gpu_type and prev.machine == cur.machine
    bw = comm.intra_bw(prev.gpu_type) if same_machine else comm.pp_link_bw
    return _activation_bytes(model, tokens) / (bw * 1e9) + comm.per_message_latency


@dataclass(frozen=True)
class StageTimes:
    prefill: tuple[float, ...]  # s per request, per stage
    decode: tuple[float, ...]  # s per decode step, per stage


def estimate_stage_times(config: Configuration, model: ModelSpec, workload: WorkloadType,
                         catalog: GpuCatalog, comm: CommParams = CommParams()) -> StageTimes:
    """Per-stage prefill and decode-step times.

    A pipeline boundary's activation transfer is charged to the sending stage.
    """
    pre, dec = [], []
    L = model.num_layers
    for s, stage in enumerate(config.stages):
        g = catalog[stage.gpu_type]
        share = stage.layer_count / L
        t = stage.tp_degree
        p = (model.flops_per_token * workload.rep_input_len * share
             / (t * g.peak_flops * 1e12 * comm.efficiency(t)))
        p += _tp_comm(stage, model, comm, workload.rep_input_len)
        d = model.weight_bytes * share / (t * g.mem_bandwidth * 1e9)
        d += _tp_comm(stage, model, comm, 1)
        if s + 1 < len(config.stages):
            nxt = config.stages[s + 1]
            p += _boundary(stage, nxt, model, comm, workload.rep_input_len)
            d += _boundary(stage, nxt, model, comm, 1)
        pre.append(p)
        dec.append(d)
    return StageTimes(tuple(pre), tuple(dec))


def max_batch(config: Configuration, model: ModelSpec, workload: WorkloadType, catalog: GpuCatalog,
              mem: MemParams = MemParams()) -> int:
    total = sum(s.tp_degree * catalog[s.gpu_type].mem_capacity * 1e9 for s in config.stages)
    free = total - model.weight_bytes * model.mem_overhead_factor
    per_request = model.kv_bytes_per_token * (workload.rep_input_len + workload.rep_output_len)
    b = math.floor(free / per_request) if free > 0 else 0
    if mem.max_batch is not None:
        b = min(b, mem.max_batch)
    return b


def estimate_throughput(config: Configuration, model: ModelSpec, workload: WorkloadType,
                        catalog: GpuCatalog, comm: CommParams = CommParams(),
                        mem: MemParams = MemParams()) -> float | None:
    """Requests/second for one replica, or None when a single request's KV cache does not fit."""
    b = max_batch(config, model, workload, catalog, mem)
    if b < 1:
        return None
    st = estimate_stage_times(config, model, workload, catalog, comm)
    prefill_rate = 1.0 / max(st.prefill)
    decode_rate = b / (workload.rep_output_len * max(st.decode))
    return min(prefill_rate, decode_rate)


def estimate_latency(config: Configuration, model: ModelSpec, workload: WorkloadType,
                     catalog: GpuCatalog, comm: CommParams = CommParams()) -> float:
    """Unloaded single-request latency: full prefill pass plus every decode step."""
    st = estimate_stage_times(config, model, workload, catalog, comm)
    return sum(st.prefill) + workload.rep_output_len * sum(st.decode)


class ThroughputTable:
    """Rates h (requests/s) and optional latencies keyed by (model, config id, workload id).

    Missing keys mean "cannot serve"; stored rates are always > 0.
    """

    def __init__(self, rates: Mapping[tuple[str, str, int], float] | None = None,
                 latency: Mapping[tuple[str, str, int], float] | None = None):
        self.rates: dict[tuple[str, str, int], float] = {}
        self.latency: dict[tuple[str, str, int], float] = dict(latency or {})
        for key, r in (rates or {}).items():
            self.set(*key, r)

    def set(self, model: str, config_id: str, workload_id: int, rate: float,
            latency: float | None = None) -> None:
        if not rate > 0:
            raise ProfileError(f"rate for ({model}, {config_id}, {workload_id}) must be > 0, got {rate!r}")
        self.rates[(model, config_id, int(workload_id))] = float(rate)
        if latency is not None:
            self.latency[(model, config_id, int(workload_id))] = float(latency)

    def rate(self, model: str, config_id: str, workload_id: int) -> float | None:
        return self.rates.get((model, config_id, workload_id))

    def __contains__(self, key) -> bool:
        return key in self.rates

    def __len__(self):
        return len(self.rates)

    def __eq__(self, other):
        return isinstance(other, ThroughputTable) and self.rates == other.rates

    def workloads(self, model: str) -> set[int]:
        return {w for m, _, w in self.rates if m == model}

    def overlay(self, other: "ThroughputTable") -> "ThroughputTable":
        """Copy of self with every entry of ``other`` taking precedence."""
        out = ThroughputTable(self.rates, self.latency)
        out.rates.update(other.rates)
        out.latency.update(other.latency)
        return out

    def scaled(self, k: float) -> "ThroughputTable":
        return ThroughputTable({key: r * k for key, r in self.rates.items()})

    def to_records(self) -> list[dict]:
        out = []
        for (m, c, w), r in sorted(self.rates.items()):
            row = {"config_id": c, "workload_id": w, "model": m, "rate_rps": r}
            if (m, c, w) in self.latency:
                row["latency_s"] = self.latency[(m, c, w)]
            out.append(row)
        return out


def build_table(configs: Iterable[Configuration], classes: Sequence[WorkloadType],
                models: Mapping[str, ModelSpec] | Sequence[ModelSpec], catalog: GpuCatalog,
                comm: CommParams = CommParams(), mem: MemParams = MemParams()) -> ThroughputTable:
    if not isinstance(models, Mapping):
        models = {m.name: m for m in models}
    table = ThroughputTable()
    for cfg in configs:
        model = models[cfg.model]
        for w in classes:
            h = estimate_throughput(cfg, model, w, catalog, comm, mem)
            if h is not None:
                table.set(cfg.model, cfg.id, w.id, h, estimate_latency(cfg, model, w, catalog, comm))
    return table


_PROFILE_FIELDS = {"config_id", "workload_id", "model", "rate_rps", "latency_s"}


def load_profile_table(source, configs: Iterable[Configuration] | None = None,
                       classes: Iterable[int] | None = None) -> ThroughputTable:
    """Read measured rates: a JSON list of records (or ``{"records": [...]}``).

    When ``configs``/``classes`` are given every record must resolve against them.
    """
    if isinstance(source, (str, Path)) and not str(source).lstrip().startswith(("[", "{")):
        doc = json.loads(Path(source).read_text())
    elif isinstance(source, (str, bytes)):
        doc = json.loads(source)
    else:
        doc = source
    records = doc["records"] if isinstance(doc, Mapping) else doc
    known_cfg = None if configs is None else {c.key for c in configs}
    known_w = None if classes is None else set(classes)
    table = ThroughputTable()
    for i, row in enumerate(records):
        extra = set(row) - _PROFILE_FIELDS
        if extra:
            raise ProfileError(f"record {i}: unknown field(s) {sorted(extra)}")
        try:
            key = (str(row["model"]), str(row["config_id"]), int(row["workload_id"]))
            rate = float(row["rate_rps"])
        except KeyError as e:
            raise ProfileError(f"record {i}: missing field {e}") from None
        if known_cfg is not None and key[:2] not in known_cfg:
            raise ProfileError(f"record {i}: unknown configuration {key[1]!r} for model {key[0]!r}")
        if known_w is not None and key[2] not in known_w:
            raise ProfileError(f"record {i}: unknown workload id {key[2]}")
        if not rate > 0:
            raise ProfileError(f"record {i}: rate_rps must be > 0, got {rate!r}")
        table.set(*key, rate, row.get("latency_s"))
    return table


def write_profile_table(path, table: ThroughputTable) -> None:
    Path(path).write_text(json.dumps({"records": table.to_records()}, indent=2) + "\n")
