"""GPU types, availability, budget and model specs.

Memory figures are GB = 1e9 bytes throughout.
"""

from __future__ import annotations

import json
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

DEFAULT_ZONE = "default"


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class GpuType:
    name: str
    peak_flops: float  # TFLOP/s, fp16
    mem_bandwidth: float  # GB/s
    mem_capacity: float  # GB
    price: float  # USD/hour
    gpus_per_machine: int = 4
    zone: str = DEFAULT_ZONE

    def __post_init__(self):
        for f in ("peak_flops", "mem_bandwidth", "mem_capacity", "price"):
            if not getattr(self, f) > 0:
                raise CatalogError(f"GpuType {self.name!r}: {f} must be > 0, got {getattr(self, f)!r}")
        if int(self.gpus_per_machine) != self.gpus_per_machine or self.gpus_per_machine < 1:
            raise CatalogError(f"GpuType {self.name!r}: gpus_per_machine must be a positive integer")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    num_layers: int
    weight_bytes: float
    flops_per_token: float
    kv_bytes_per_token: float
    min_replica_memory: float  # GB
    mem_overhead_factor: float = 1.2

    def __post_init__(self):
        if int(self.num_layers) != self.num_layers or self.num_layers < 1:
            raise CatalogError(f"ModelSpec {self.name!r}: num_layers must be a positive integer")
        for f in ("weight_bytes", "flops_per_token", "kv_bytes_per_token", "min_replica_memory"):
            if not getattr(self, f) > 0:
                raise CatalogError(f"ModelSpec {self.name!r}: {f} must be > 0")
        if self.mem_overhead_factor < 1:
            raise CatalogError(f"ModelSpec {self.name!r}: mem_overhead_factor must be >= 1")
        if self.min_replica_memory < self.weight_bytes / 1e9 * (1 - 1e-12):
            raise CatalogError(
                f"ModelSpec {self.name!r}: min_replica_memory {self.min_replica_memory} GB "
                f"is below weight_bytes ({self.weight_bytes / 1e9:g} GB)")

    @property
    def weight_gb(self) -> float:
        return self.weight_bytes / 1e9


@dataclass(frozen=True)
class Budget:
    limit: float  # USD/hour

    def __post_init__(self):
        if not self.limit > 0:
            raise CatalogError(f"Budget: limit must be > 0, got {self.limit!r}")


@dataclass(frozen=True)
class GpuCatalog:
    types: tuple[GpuType, ...]

    def __post_init__(self):
        names = [t.name for t in self.types]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise CatalogError(f"duplicate GpuType name(s): {sorted(dup)}")

    def __getitem__(self, name: str) -> GpuType:
        for t in self.types:
            if t.name == name:
                return t
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(t.name == name for t in self.types)

    def __iter__(self):
        return iter(self.types)

    def __len__(self):
        return len(self.types)

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.types]

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class Availability:
    counts: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.counts.items():
            if int(v) != v or v < 0:
                raise CatalogError(f"Availability: count for {k!r} must be a non-negative integer, got {v!r}")

    def __getitem__(self, name: str) -> int:
        return int(self.counts.get(name, 0))

    def validate(self, catalog: GpuCatalog) -> None:
        unknown = [k for k in self.counts if k not in catalog]
        if unknown:
            raise CatalogError(f"Availability: unknown GPU type(s) {unknown}")

    def replace(self, **changes: int) -> "Availability":
        return Availability({**self.counts, **changes})


# Peak fp16 FLOPS, bandwidth, memory and hourly price per GPU as published
# alongside the benchmark study.  Machine sizes are our assumption.
_TABLE_ONE = [
    ("A6000", "91", "960", "48", "0.83", 4),
    ("A40", "150", "696", "48", "0.55", 4),
    ("L40", "181", "864", "48", "0.83", 4),
    ("A100", "312", "1555", "80", "1.75", 8),
    ("H100", "1979", "3350", "80", "2.99", 8),
    ("4090", "83", "1008", "24", "0.53", 4),
]

# Llama3-class shapes: 2 bytes/param, 2 FLOP/param/token, GQA with 8 kv heads of dim 128.
LLAMA3_8B = ModelSpec(
    name="llama3-8b", num_layers=32, weight_bytes=16e9, flops_per_token=16e9,
    kv_bytes_per_token=32 * 8 * 128 * 2 * 2, min_replica_memory=16.0)
LLAMA3_70B = ModelSpec(
    name="llama3-70b", num_layers=80, weight_bytes=140e9, flops_per_token=140e9,
    kv_bytes_per_token=80 * 8 * 128 * 2 * 2, min_replica_memory=140.0)
DEFAULT_MODELS = (LLAMA3_8B, LLAMA3_70B)

# Rental snapshots (cloud availability at four sampled times).
AVAILABILITY_SNAPSHOTS = {
    1: {"4090": 16, "A40": 12, "A6000": 8, "L40": 12, "A100": 6, "H100": 8},
    2: {"4090": 32, "A40": 8, "A6000": 16, "L40": 16, "A100": 7, "H100": 12},
    3: {"4090": 32, "A40": 16, "A6000": 8, "L40": 8, "A100": 32, "H100": 8},
    4: {"4090": 24, "A40": 24, "A6000": 24, "L40": 16, "A100": 4, "H100": 8},
}


def default_catalog() -> GpuCatalog:
    return GpuCatalog(tuple(
        GpuType(name, float(flops), float(bw), float(mem), float(price), gpm)
        for name, flops, bw, mem, price, gpm in _TABLE_ONE))


def default_availability(snapshot: int = 1) -> Availability:
    return Availability(dict(AVAILABILITY_SNAPSHOTS[snapshot]))


@dataclass(frozen=True)
class CatalogBundle:
    catalog: GpuCatalog
    availability: Availability
    budget: Budget | None
    models: tuple[ModelSpec, ...]

    def model(self, name: str) -> ModelSpec:
        for m in self.models:
            if m.name == name:
                return m
        raise KeyError(f"unknown model {name!r}")

    # tuple-unpacking keeps the loader usable as (catalog, availability, budget, models)
    def __iter__(self):
        return iter((self.catalog, self.availability, self.budget, list(self.models)))


_TOP_KEYS = {"gpu_types", "availability", "budget_per_hour", "models"}


def _build(cls, raw: Any, what: str):
    if not isinstance(raw, Mapping):
        raise CatalogError(f"{what}: expected a mapping, got {type(raw).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise CatalogError(f"{what}: unknown field(s) {unknown}")
    required = {f.name for f in fields(cls) if f.default is MISSING and f.default_factory is MISSING}
    missing = sorted(k for k in required if k not in raw)
    if missing:
        raise CatalogError(f"{what}: missing field(s) {missing}")
    try:
        return cls(**raw)
    except TypeError as e:
        raise CatalogError(f"{what}: {e}") from None


def _read_document(source) -> Mapping[str, Any]:
    if isinstance(source, Mapping):
        return source
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text()
        origin = str(source)
    else:
        text, origin = source, "<string>"
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CatalogError(f"{origin}: parse error at line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(doc, Mapping):
        raise CatalogError(f"{origin}: top level must be an object")
    return doc


def load_catalog(source) -> CatalogBundle:
    """Load a catalog document (path, JSON text or an already-parsed mapping).

    Every section is optional except ``gpu_types``.
    """
    doc = _read_document(source)
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise CatalogError(f"catalog: unknown top-level key(s) {unknown}")
    if "gpu_types" not in doc:
        raise CatalogError("catalog: missing top-level key 'gpu_types'")
    types = []
    for i, raw in enumerate(doc["gpu_types"]):
        name = raw.get("name", f"#{i}") if isinstance(raw, Mapping) else f"#{i}"
        types.append(_build(GpuType, raw, f"GpuType {name!r}"))
    catalog = GpuCatalog(tuple(types))
    raw_avail = doc.get("availability", {})
    if not isinstance(raw_avail, Mapping):
        raise CatalogError("Availability: expected a mapping of type name to count")
    availability = Availability(dict(raw_avail))
    availability.validate(catalog)
    budget = Budget(float(doc["budget_per_hour"])) if doc.get("budget_per_hour") is not None else None
    models = []
    for i, raw in enumerate(doc.get("models", [])):
        name = raw.get("name", f"#{i}") if isinstance(raw, Mapping) else f"#{i}"
        models.append(_build(ModelSpec, raw, f"ModelSpec {name!r}"))
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise CatalogError("models: duplicate model names")
    return CatalogBundle(catalog, availability, budget, tuple(models))


def dump_catalog(catalog: GpuCatalog, availability: Availability | None = None,
                 budget: Budget | float | None = None, models=()) -> dict:
    doc: dict[str, Any] = {"gpu_types": [asdict(t) for t in catalog]}
    if availability is not None:
        doc["availability"] = {k: int(v) for k, v in availability.counts.items()}
    if budget is not None:
        doc["budget_per_hour"] = budget.limit if isinstance(budget, Budget) else float(budget)
    if models:
        doc["models"] = [asdict(m) for m in models]
    return doc


def budget_limit(budget) -> float:
    return budget.limit if isinstance(budget, Budget) else float(budget)
