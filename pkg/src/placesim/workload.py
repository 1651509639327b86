"""Trace ingestion and task arrival generation.

Trace files hold per-(input, config) latency measurements; workload files
hold the per-input size feature and, optionally, arrival times.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .containers import ContainerConfig

TRACE_COLUMNS = ("input_id", "config", "upld_ms", "start_ms", "start_type",
                 "comp_ms", "iotup_ms", "store_ms")
WORKLOAD_COLUMNS = ("input_id", "size", "arrival_time_ms")

WARM = "warm"
COLD = "cold"


class TraceError(ValueError):
    """Malformed trace or workload file; carries the 1-based file line."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TraceValidationError(TraceError):
    """Row parsed but violates a field invariant (e.g. a negative duration)."""


@dataclass(frozen=True)
class InputItem:
    id: str
    size: float
    arrival_time_ms: float = 0.0

    def __post_init__(self):
        if not (self.size >= 0 and math.isfinite(self.size)):
            raise ValueError(f"input {self.id}: size must be finite and >= 0")
        if not (self.arrival_time_ms >= 0 and math.isfinite(self.arrival_time_ms)):
            raise ValueError(f"input {self.id}: arrival time must be finite and >= 0")


@dataclass(frozen=True)
class TraceRow:
    input_id: str
    config: ContainerConfig
    comp_ms: float
    store_ms: float
    upld_ms: float | None = None
    start_ms: float | None = None
    start_type: str | None = None
    iotup_ms: float | None = None

    def validate(self):
        for name in ("upld_ms", "start_ms", "comp_ms", "iotup_ms", "store_ms"):
            value = getattr(self, name)
            if value is None:
                continue
            if not math.isfinite(value):
                raise TraceValidationError(f"{name} is not finite")
            if value < 0:
                raise TraceValidationError(f"{name}={value:g} is negative")
        if self.config.is_edge:
            if self.upld_ms is not None:
                raise TraceValidationError("edge rows carry no upld_ms")
            if self.start_type not in (None, WARM, COLD):
                raise TraceValidationError(f"bad start_type {self.start_type!r}")
        else:
            if self.iotup_ms is not None:
                raise TraceValidationError("cloud rows carry no iotup_ms")
            for name in ("upld_ms", "start_ms"):
                if getattr(self, name) is None:
                    raise TraceValidationError(f"cloud row missing {name}")
            if self.start_type not in (WARM, COLD):
                raise TraceValidationError(f"cloud row needs start_type warm|cold, got {self.start_type!r}")

    @property
    def total_ms(self) -> float:
        """End-to-end latency of the row; missing iotup counts as 0."""
        if self.config.is_edge:
            return self.comp_ms + (self.iotup_ms or 0.0) + self.store_ms
        return self.upld_ms + self.start_ms + self.comp_ms + self.store_ms


@dataclass
class Workload:
    items: list[InputItem]
    app_label: str = ""

    def __post_init__(self):
        times = [it.arrival_time_ms for it in self.items]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("workload items must be ordered by arrival time")

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def sizes(self) -> dict[str, float]:
        return {it.id: it.size for it in self.items}


def _opt_float(cell):
    cell = (cell or "").strip()
    return None if cell == "" else float(cell)


def _parse_trace_row(rec) -> TraceRow:
    input_id = (rec.get("input_id") or "").strip()
    if not input_id:
        raise TraceError("missing input_id")
    try:
        config = ContainerConfig.parse(rec.get("config") or "")
    except ValueError as exc:
        raise TraceError(str(exc)) from None
    try:
        values = {name: _opt_float(rec.get(name))
                  for name in ("upld_ms", "start_ms", "comp_ms", "iotup_ms", "store_ms")}
    except ValueError as exc:
        raise TraceError(f"non-numeric duration ({exc})") from None
    for name in ("comp_ms", "store_ms"):
        if values[name] is None:
            raise TraceError(f"missing {name}")
    start_type = (rec.get("start_type") or "").strip().lower() or None
    row = TraceRow(input_id=input_id, config=config, start_type=start_type, **values)
    row.validate()
    return row


def load_trace(path) -> list[TraceRow]:
    """Read and validate a trace CSV, preserving row order."""
    path = Path(path)
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise TraceError(f"{path}: header missing columns {sorted(missing)}", line=1)
        for rec in reader:
            line = reader.line_num
            if None in rec:
                raise TraceError("too many fields", line=line)
            try:
                rows.append(_parse_trace_row(rec))
            except TraceValidationError as exc:
                raise TraceValidationError(str(exc), line=line) from None
            except TraceError as exc:
                raise TraceError(str(exc), line=line) from None
    return rows


def _fmt(value):
    return "" if value is None else repr(float(value))


def write_trace(path, rows):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in rows:
            writer.writerow([r.input_id, str(r.config), _fmt(r.upld_ms), _fmt(r.start_ms),
                             r.start_type or "", _fmt(r.comp_ms), _fmt(r.iotup_ms),
                             _fmt(r.store_ms)])


def load_workload(path, arrivals=None, app_label="") -> Workload:
    """Read a workload CSV.

    When the file has no ``arrival_time_ms`` column (or it is empty on every
    row), ``arrivals`` must supply one time per item.
    """
    path = Path(path)
    ids, sizes, times = [], [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or ()
        if "input_id" not in fields or "size" not in fields:
            raise TraceError(f"{path}: header needs input_id,size", line=1)
        for rec in reader:
            line = reader.line_num
            try:
                size = float(rec["size"])
                t = _opt_float(rec.get("arrival_time_ms"))
            except (TypeError, ValueError):
                raise TraceError("non-numeric size or arrival time", line=line) from None
            if not math.isfinite(size) or size < 0:
                raise TraceValidationError(f"size={size:g} must be >= 0", line=line)
            if t is not None and (not math.isfinite(t) or t < 0):
                raise TraceValidationError(f"arrival_time_ms={t:g} must be >= 0", line=line)
            ids.append(rec["input_id"].strip())
            sizes.append(size)
            times.append(t)
    have = [t is not None for t in times]
    if any(have) and not all(have):
        raise TraceError(f"{path}: arrival_time_ms must be given for every row or none")
    if not any(have):
        if arrivals is None:
            raise TraceError(f"{path}: no arrival times in file and none generated")
        if len(arrivals) != len(ids):
            raise ValueError("generated arrival count does not match workload length")
        times = list(arrivals)
    items = [InputItem(i, s, float(t)) for i, s, t in zip(ids, sizes, times)]
    return Workload(items, app_label=app_label)


def write_workload(path, workload, with_arrivals=True):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(WORKLOAD_COLUMNS if with_arrivals else WORKLOAD_COLUMNS[:2])
        for it in workload:
            row = [it.id, repr(float(it.size))]
            if with_arrivals:
                row.append(repr(float(it.arrival_time_ms)))
            writer.writerow(row)


def generate_arrivals(n, mode="poisson", rate_per_s=4.0, seed=0) -> list[float]:
    """Arrival times in ms for ``n`` tasks.

    ``fixed`` spaces tasks exactly ``1000/rate_per_s`` apart starting at 0;
    ``poisson`` draws i.i.d. exponential gaps with that mean, the first gap
    counted from time 0.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if not rate_per_s > 0:
        raise ValueError(f"rate_per_s must be positive, got {rate_per_s}")
    mean_gap = 1000.0 / rate_per_s
    if mode == "fixed":
        return [k * mean_gap for k in range(n)]
    if mode == "poisson":
        rng = np.random.default_rng(seed)
        return np.cumsum(rng.exponential(mean_gap, size=n)).tolist()
    raise ValueError(f"unknown arrival mode {mode!r}")


def make_workload(sizes, arrivals, ids=None, app_label="") -> Workload:
    ids = ids or [f"in{k:05d}" for k in range(len(sizes))]
    return Workload([InputItem(i, float(s), float(t)) for i, s, t in zip(ids, sizes, arrivals)],
                    app_label=app_label)


@dataclass
class TraceIndex:
    """Lookup of trace rows by (input_id, config); warm rows win over cold."""

    rows: dict = field(default_factory=dict)

    @classmethod
    def build(cls, trace):
        index = {}
        for row in trace:
            key = (row.input_id, row.config)
            current = index.get(key)
            if current is None or (current.start_type == COLD and row.start_type != COLD):
                index[key] = row
        return cls(index)

    def get(self, input_id, config):
        return self.rows.get((input_id, config))
