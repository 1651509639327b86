"""Latency/cost prediction per configuration and the container information list.

The CIL is the predictor's belief about live cloud containers. A record is
idle at time ``t`` iff ``busy_until_ms <= t < death_time_ms``; idleness is
derived on demand rather than stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .containers import EDGE, ContainerConfig
from .pricing import DEFAULT_PRICING, cost
from .workload import COLD, WARM

EDGE_START = "n/a-edge"


class PredictionError(LookupError):
    pass


class CILConsistencyError(RuntimeError):
    """A warm update arrived for a config with no idle container."""


@dataclass
class ContainerRecord:
    busy_until_ms: float
    last_completion_ms: float
    death_time_ms: float

    def is_idle(self, t) -> bool:
        return self.busy_until_ms <= t < self.death_time_ms


@dataclass
class CIL:
    records: dict = field(default_factory=dict)

    def for_config(self, config) -> list:
        return self.records.get(config, [])

    def idle_records(self, config, t) -> list:
        return [r for r in self.for_config(config) if r.is_idle(t)]

    def has_idle(self, config, t) -> bool:
        return any(r.is_idle(t) for r in self.for_config(config))

    def prune(self, now_ms):
        """Drop records whose death time is strictly before ``now_ms``."""
        for config in list(self.records):
            alive = [r for r in self.records[config] if not r.death_time_ms < now_ms]
            if alive:
                self.records[config] = alive
            else:
                del self.records[config]

    def count(self, config=None) -> int:
        if config is not None:
            return len(self.for_config(config))
        return sum(len(v) for v in self.records.values())

    def copy(self) -> "CIL":
        return CIL({c: [ContainerRecord(r.busy_until_ms, r.last_completion_ms, r.death_time_ms)
                        for r in recs] for c, recs in self.records.items()})


@dataclass(frozen=True)
class Prediction:
    config: ContainerConfig
    start_type: str
    breakdown: dict
    total_ms: float
    cost_usd: float

    @property
    def comp_ms(self) -> float:
        return self.breakdown["comp"]

    @property
    def trigger_offset_ms(self) -> float:
        """Time from dispatch until the cloud function is triggered."""
        return self.breakdown.get("upld", 0.0)


def cloud_prediction(config, start_type, upld, start, comp, store, pricing=DEFAULT_PRICING):
    breakdown = {"upld": upld, "start": start, "comp": comp, "store": store}
    return Prediction(config, start_type, breakdown, upld + start + comp + store,
                      cost(comp, config, pricing))


def edge_prediction(comp, iotup, store, queue_wait):
    breakdown = {"queue_wait": queue_wait, "comp": comp, "iotup": iotup, "store": store}
    return Prediction(EDGE, EDGE_START, breakdown, queue_wait + comp + iotup + store, 0.0)


def predict(item, now_ms, bundle, cil, edge_queue_wait_ms=0.0, pricing=DEFAULT_PRICING,
            configs=None) -> list:
    """Predictions for every cloud config in ``configs`` (default: the bundle's set) plus edge.

    A cloud config is predicted warm iff the CIL holds an idle container for it
    at the predicted trigger time ``now_ms + upld``. Does not modify ``cil``.
    """
    configs = bundle.config_set if configs is None else list(configs)
    cloud = [c for c in configs if not c.is_edge]
    for c in cloud:
        if not bundle.covers(c):
            raise PredictionError(f"config {c} MB not in model bundle")
    out = []
    if cloud:
        upld = bundle.upload_ms(item.size)
        store = bundle.cloud_store.predict()
        comps = bundle.cloud_compute_many(item.size, [c.memory_mb for c in cloud])
        trigger = now_ms + upld
        for c, comp in zip(cloud, comps):
            start_type = WARM if cil.has_idle(c, trigger) else COLD
            out.append(cloud_prediction(c, start_type, upld, bundle.start_ms(c, start_type),
                                        float(comp), store, pricing))
    if EDGE in configs:
        out.append(edge_prediction(bundle.edge_compute_ms(item.size), bundle.iot_upload.predict(),
                                   bundle.edge_store.predict(), float(edge_queue_wait_ms)))
    return out


def update_cil(cil, config, now_ms, prediction, t_idl_ms) -> CIL:
    """Record the dispatch of ``prediction`` to ``config`` at ``now_ms``.

    Cold predictions add a container; warm ones reuse the idle container with
    the most recent completion. Either way the container is busy from the
    trigger time through predicted start plus compute, and dies ``t_idl_ms``
    after that. Dead records are pruned afterwards. Mutates and returns ``cil``.
    """
    if config.is_edge:
        raise ValueError("edge executions do not touch the CIL")
    if prediction.config != config:
        raise ValueError(f"prediction for {prediction.config} passed for config {config}")
    trigger = now_ms + prediction.trigger_offset_ms
    done = trigger + prediction.breakdown["start"] + prediction.breakdown["comp"]
    recs = cil.records.setdefault(config, [])
    if prediction.start_type == COLD:
        rec = ContainerRecord(done, done, done + t_idl_ms)
        recs.append(rec)
    elif prediction.start_type == WARM:
        idle = [r for r in recs if r.is_idle(trigger)]
        if not idle:
            raise CILConsistencyError(f"warm prediction for {config} but no idle container at {trigger}")
        rec = max(idle, key=lambda r: r.last_completion_ms)
        rec.busy_until_ms = done
        rec.last_completion_ms = done
        rec.death_time_ms = done + t_idl_ms
    else:
        raise ValueError(f"unexpected start type {prediction.start_type!r}")
    recs.sort(key=lambda r: r.last_completion_ms)
    cil.prune(now_ms)
    return cil


class Predictor:
    """Stateful wrapper owning a bundle, pricing and its CIL."""

    def __init__(self, bundle, pricing=DEFAULT_PRICING, configs=None, t_idl_ms=None):
        self.bundle = bundle
        self.pricing = pricing
        self.configs = list(bundle.config_set if configs is None else configs)
        if EDGE not in self.configs:
            self.configs.append(EDGE)
        self.t_idl_ms = bundle.t_idl_ms if t_idl_ms is None else t_idl_ms
        if not self.t_idl_ms > 0 and not math.isinf(self.t_idl_ms):
            raise ValueError("t_idl_ms must be positive")
        self.cil = CIL()

    def predict(self, item, now_ms, edge_queue_wait_ms=0.0):
        return predict(item, now_ms, self.bundle, self.cil, edge_queue_wait_ms, self.pricing,
                       self.configs)

    def update_cil(self, config, now_ms, prediction):
        if config.is_edge:
            return self.cil
        return update_cil(self.cil, config, now_ms, prediction, self.t_idl_ms)
