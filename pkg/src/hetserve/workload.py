"""Request traces, workload classes and demand matrices."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

IN_THRESHOLD = 512
OUT_THRESHOLD = 128


class WorkloadError(ValueError):
    pass


class InputClass(str, Enum):
    SHORT_IN = "SHORT_IN"
    LONG_IN = "LONG_IN"


class OutputClass(str, Enum):
    SHORT_OUT = "SHORT_OUT"
    LONG_OUT = "LONG_OUT"


def classify(input_len, output_len, in_threshold=IN_THRESHOLD, out_threshold=OUT_THRESHOLD):
    """Quadrant of a request; a length is long only when it strictly exceeds its threshold."""
    if input_len < 0 or output_len < 0:
        raise WorkloadError("token lengths must be >= 0")
    if in_threshold <= 0 or out_threshold <= 0:
        raise WorkloadError("thresholds must be > 0")
    return (InputClass.LONG_IN if input_len > in_threshold else InputClass.SHORT_IN,
            OutputClass.LONG_OUT if output_len > out_threshold else OutputClass.SHORT_OUT)


@dataclass(frozen=True)
class WorkloadType:
    id: int
    rep_input_len: int
    rep_output_len: int

    def __post_init__(self):
        if self.rep_input_len <= 0 or self.rep_output_len <= 0:
            raise WorkloadError(f"WorkloadType {self.id}: representative lengths must be > 0")

    @property
    def quadrant(self):
        return classify(self.rep_input_len, self.rep_output_len)


# Nine benchmark classes: inputs {2455, 824, 496} x outputs {18, 253, 510}.
# Class 1 is the long-input / short-output pair.
DEFAULT_CLASSES: tuple[WorkloadType, ...] = tuple(
    WorkloadType(1 + 3 * i + j, inp, out)
    for i, inp in enumerate((2455, 824, 496))
    for j, out in enumerate((18, 253, 510)))

# Per-class request shares (percent) of the three subsampled production traces.
TRACE_RATIOS = {
    1: (33, 7, 8, 7, 27, 6, 6, 3, 3),
    2: (22, 5, 5, 21, 5, 5, 19, 6, 12),
    3: (4, 1, 4, 3, 20, 27, 1, 25, 15),
}


def trace_ratios(trace: int, classes: Sequence[WorkloadType] = DEFAULT_CLASSES) -> dict[int, float]:
    return {c.id: float(r) for c, r in zip(classes, TRACE_RATIOS[trace])}


@dataclass(frozen=True)
class RequestRecord:
    input_len: int
    output_len: int
    model: str
    arrival_time: float | None = None

    def __post_init__(self):
        if self.input_len < 0 or self.output_len < 0:
            raise WorkloadError("token lengths must be >= 0")
        if self.arrival_time is not None and self.arrival_time < 0:
            raise WorkloadError("arrival_time must be >= 0")


class DemandMatrix:
    """Request counts keyed by (model, workload id)."""

    def __init__(self, f: Mapping[tuple[str, int], float] | None = None):
        self.f: dict[tuple[str, int], float] = {}
        for (m, w), n in (f or {}).items():
            if n < 0:
                raise WorkloadError(f"negative demand for ({m}, {w})")
            self.f[(m, int(w))] = n

    @classmethod
    def single(cls, model: str, counts: Mapping[int, float]) -> "DemandMatrix":
        return cls({(model, w): n for w, n in counts.items()})

    def __getitem__(self, key) -> float:
        return self.f.get(key, 0)

    def __eq__(self, other):
        return isinstance(other, DemandMatrix) and self.positive() == other.positive()

    def __repr__(self):
        return f"DemandMatrix({self.f!r})"

    def items(self):
        return self.f.items()

    def positive(self) -> dict[tuple[str, int], float]:
        return {k: v for k, v in self.f.items() if v > 0}

    @property
    def models(self) -> list[str]:
        return sorted({m for m, _ in self.f})

    def total(self, model: str | None = None) -> float:
        return sum(v for (m, _), v in self.f.items() if model is None or m == model)

    def for_model(self, model: str) -> "DemandMatrix":
        return DemandMatrix({k: v for k, v in self.f.items() if k[0] == model})

    def scaled(self, k: float) -> "DemandMatrix":
        return DemandMatrix({key: v * k for key, v in self.f.items()})

    def require_positive(self) -> None:
        if not self.positive():
            raise WorkloadError("demand matrix has no positive entry")

    def to_doc(self) -> dict:
        return {"demand": [{"model": m, "workload_id": w, "count": n}
                           for (m, w), n in sorted(self.f.items())]}


def nearest_class(input_len: int, output_len: int, classes: Sequence[WorkloadType],
                  in_threshold=IN_THRESHOLD, out_threshold=OUT_THRESHOLD) -> WorkloadType:
    """Bucket a request: same quadrant first, then nearest in log-length space."""
    if not classes:
        raise WorkloadError("no workload classes given")
    quad = classify(input_len, output_len, in_threshold, out_threshold)
    pool = [c for c in classes
            if classify(c.rep_input_len, c.rep_output_len, in_threshold, out_threshold) == quad]
    pool = pool or list(classes)
    li, lo = math.log(max(input_len, 1)), math.log(max(output_len, 1))

    def dist(c):
        return ((math.log(c.rep_input_len) - li) ** 2 + (math.log(c.rep_output_len) - lo) ** 2, c.id)

    return min(pool, key=dist)


def ingest_trace(records: Iterable[RequestRecord], classes: Sequence[WorkloadType] = DEFAULT_CLASSES,
                 models: Iterable[str] | None = None) -> DemandMatrix:
    if not classes:
        raise WorkloadError("no workload classes given")
    known = None if models is None else set(models)
    counts: dict[tuple[str, int], int] = {}
    for r in records:
        if known is not None and r.model not in known:
            raise WorkloadError(f"record references unknown model {r.model!r}")
        c = nearest_class(r.input_len, r.output_len, classes)
        counts[(r.model, c.id)] = counts.get((r.model, c.id), 0) + 1
    if known is not None:
        for m in known:
            for c in classes:
                counts.setdefault((m, c.id), 0)
    return DemandMatrix(counts)


def largest_remainder(weights: Sequence[float], total: int) -> list[int]:
    """Integer apportionment of ``total`` proportional to ``weights``.

    Ties in the fractional part go to the lower index.
    """
    w = np.asarray(weights, dtype=float)
    if total < 0 or (w < 0).any() or w.sum() <= 0:
        raise ValueError("need non-negative weights with a positive sum and total >= 0")
    exact = w / w.sum() * total
    base = np.floor(exact).astype(int)
    rest = total - int(base.sum())
    frac = exact - base
    order = sorted(range(len(w)), key=lambda i: (-frac[i], i))
    for i in order[:rest]:
        base[i] += 1
    return base.tolist()


def synth_trace(ratios: Mapping[int, float], total: int, seed: int, model: str = "llama3-70b",
                classes: Sequence[WorkloadType] = DEFAULT_CLASSES,
                arrival_rate: float | None = None) -> list[RequestRecord]:
    """Synthetic trace with class counts apportioned from percent ratios.

    Records carry the class representative lengths.  Arrivals are all at
    t=0 unless ``arrival_rate`` (requests/s) asks for a Poisson process.
    """
    if total <= 0:
        raise WorkloadError("total must be > 0")
    s = sum(ratios.values())
    if abs(s - 100) > 0.5:
        raise WorkloadError(f"ratios sum to {s}, expected 100 +- 0.5")
    by_id = {c.id: c for c in classes}
    missing = [k for k in ratios if k not in by_id]
    if missing:
        raise WorkloadError(f"unknown workload class id(s) {missing}")
    ids = list(ratios)
    counts = largest_remainder([ratios[i] for i in ids], total)
    rng = np.random.default_rng(seed)
    pool = np.repeat(np.array(ids), counts)
    rng.shuffle(pool)
    if arrival_rate:
        arrivals = np.cumsum(rng.exponential(1.0 / arrival_rate, size=total))
    else:
        arrivals = np.zeros(total)
    return [RequestRecord(by_id[int(i)].rep_input_len, by_id[int(i)].rep_output_len, model, float(t))
            for i, t in zip(pool, arrivals)]


# -- files -------------------------------------------------------------------

def read_trace(path) -> list[RequestRecord]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            out.append(RequestRecord(int(raw["input_len"]), int(raw["output_len"]), str(raw["model"]),
                                     None if raw.get("arrival_time") is None else float(raw["arrival_time"])))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise WorkloadError(f"{path}:{lineno}: bad trace record ({e})") from None
    return out


def write_trace(path, records: Iterable[RequestRecord]) -> None:
    with open(path, "w") as fh:
        for r in records:
            row = {"input_len": r.input_len, "output_len": r.output_len, "model": r.model}
            if r.arrival_time is not None:
                row["arrival_time"] = r.arrival_time
            fh.write(json.dumps(row) + "\n")


def classes_from_doc(raw) -> tuple[WorkloadType, ...]:
    return tuple(WorkloadType(int(c["id"]), int(c["rep_input_len"]), int(c["rep_output_len"])) for c in raw)


def classes_to_doc(classes: Sequence[WorkloadType]) -> list[dict]:
    return [{"id": c.id, "rep_input_len": c.rep_input_len, "rep_output_len": c.rep_output_len}
            for c in classes]


def load_demand(path) -> tuple[DemandMatrix, tuple[WorkloadType, ...] | None]:
    """Read a demand document: ``{"demand": [{model, workload_id, count}], "workload_types": [...]}``."""
    doc = json.loads(Path(path).read_text())
    unknown = set(doc) - {"demand", "workload_types"}
    if unknown:
        raise WorkloadError(f"{path}: unknown key(s) {sorted(unknown)}")
    f = {}
    for row in doc["demand"]:
        f[(str(row["model"]), int(row["workload_id"]))] = float(row["count"])
    classes = classes_from_doc(doc["workload_types"]) if "workload_types" in doc else None
    return DemandMatrix(f), classes


def load_ratio_spec(path) -> dict:
    """Ratio-spec document for ``synth_trace``: ``{"ratios": {id: pct}, "total": n, "seed": s, ...}``."""
    doc = json.loads(Path(path).read_text())
    doc["ratios"] = {int(k): float(v) for k, v in doc["ratios"].items()}
    return doc
