"""Event-driven replay of a workload through the decision loop.

Decisions come from :class:`~placesim.engine.DecisionLoop` (predicted state
only). Actual executions run against a separate ground-truth container pool
and a ground-truth edge FIFO, with component times read from a measurement
trace or drawn from the models with multiplicative noise.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .engine import MIN_COST, MIN_LATENCY, DecisionLoop
from .models.basic import NormalDist, noise_floor_mape
from .pricing import DEFAULT_PRICING, cost
from .workload import COLD, WARM, TraceIndex

TRACE = "trace"
GENERATIVE = "generative"

# Event priorities at equal timestamps: completions free resources first.
ARRIVAL = "arrival"
CLOUD_TRIGGER = "cloud_trigger"
CLOUD_DONE = "cloud_done"
EDGE_COMPUTE_DONE = "edge_compute_done"
EDGE_STORE_DONE = "edge_store_done"
_PRIORITY = {EDGE_COMPUTE_DONE: 0, EDGE_STORE_DONE: 0, CLOUD_DONE: 0, CLOUD_TRIGGER: 1, ARRIVAL: 2}

CLOUD_COMPONENTS = ("upld", "start", "comp", "store")
EDGE_COMPONENTS = ("comp", "iotup", "store")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    """Log-sd of mean-one lognormal factors applied per component (generative mode)."""

    upld: float = 0.0
    start: float = 0.0
    comp: float = 0.0
    store: float = 0.0
    edge_comp: float = 0.0
    iotup: float = 0.0
    edge_store: float = 0.0

    @classmethod
    def uniform(cls, cloud=0.0, edge=0.0):
        return cls(cloud, cloud, cloud, cloud, edge, edge, edge)

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        if set(d) <= {"cloud", "edge"} and d:
            return cls.uniform(d.get("cloud", 0.0), d.get("edge", 0.0))
        return cls(**d)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _factors(rng, sigmas):
    z = rng.standard_normal(len(sigmas))
    s = np.asarray(sigmas, dtype=float)
    return np.exp(s * z - 0.5 * s * s)


def _config_code(config):
    return 0 if config.is_edge else int(config.memory_mb)


def component_rng(seed, input_index, config):
    """Stream for one (input, config) pair, independent of placement history."""
    return np.random.default_rng([int(seed), 1, int(input_index), _config_code(config)])


def actuals_for(item, config, mode, trace_index=None, bundle=None, noise=None, start_type=WARM,
                seed=0, input_index=0) -> dict:
    """Actual component times for running ``item`` on ``config``.

    Trace mode reads the measured row; a ground-truth cold start replaces the
    start time with a draw from the bundle's cold-start distribution.
    Generative mode scales each model prediction by a noise factor.
    """
    rng = component_rng(seed, input_index, config)
    if mode == TRACE:
        row = trace_index.get(item.id, config) if trace_index is not None else None
        if row is None:
            raise SimulationError(f"no trace row for input {item.id!r} on config {config}")
        if config.is_edge:
            return {"comp": row.comp_ms, "iotup": row.iotup_ms or 0.0, "store": row.store_ms}
        cold_draw = bundle.cold_start_dist.sample(rng) if bundle is not None else None
        if start_type == COLD:
            if row.start_type == COLD:
                start = row.start_ms
            elif cold_draw is None:
                raise SimulationError("cold start in trace mode needs a bundle cold-start distribution")
            else:
                start = cold_draw
        elif row.start_type == WARM:
            start = row.start_ms
        else:
            start = bundle.start_ms(config, WARM)
        return {"upld": row.upld_ms, "start": float(start), "comp": row.comp_ms, "store": row.store_ms}
    if mode == GENERATIVE:
        noise = noise or NoiseSpec()
        if config.is_edge:
            f = _factors(rng, [noise.edge_comp, noise.iotup, noise.edge_store])
            return {"comp": bundle.edge_compute_ms(item.size) * f[0],
                    "iotup": bundle.iot_upload.predict() * f[1],
                    "store": bundle.edge_store.predict() * f[2]}
        f = _factors(rng, [noise.upld, noise.start, noise.comp, noise.store])
        return {"upld": bundle.upload_ms(item.size) * f[0],
                "start": bundle.start_ms(config, start_type) * f[1],
                "comp": bundle.cloud_compute_ms(item.size, config.memory_mb) * f[2],
                "store": bundle.cloud_store.predict() * f[3]}
    raise ValueError(f"unknown simulation mode {mode!r}")


@dataclass
class PoolContainer:
    busy_until_ms: float
    last_completion_ms: float
    death_time_ms: float
    t_idl_ms: float

    def is_idle(self, t):
        return self.busy_until_ms <= t < self.death_time_ms


@dataclass
class GroundTruthPool:
    """Authoritative container state; same rules as the CIL, actual times."""

    t_idl: NormalDist
    rng: np.random.Generator
    containers: dict = field(default_factory=dict)

    def acquire(self, config, trigger_ms, start_warm_ms, start_cold_ms, comp_ms):
        """Run one function triggered at ``trigger_ms``; returns (start_type, start_ms, done_ms)."""
        recs = [c for c in self.containers.get(config, []) if not c.death_time_ms < trigger_ms]
        idle = [c for c in recs if c.is_idle(trigger_ms)]
        if idle:
            rec = max(idle, key=lambda c: c.last_completion_ms)
            start_type, start = WARM, start_warm_ms
        else:
            rec = PoolContainer(0.0, 0.0, 0.0, float(self.t_idl.sample(self.rng)))
            recs.append(rec)
            start_type, start = COLD, start_cold_ms
        done = trigger_ms + start + comp_ms
        rec.busy_until_ms = done
        rec.last_completion_ms = done
        rec.death_time_ms = done + rec.t_idl_ms
        self.containers[config] = recs
        return start_type, start, done


@dataclass
class SimOutcome:
    input_id: str
    arrival_time_ms: float
    config: object
    predicted: object
    actual: dict
    actual_total_ms: float
    actual_cost_usd: float
    start_type_actual: str
    allowance_usd: float | None = None
    deadline_violated: bool | None = None
    budget_violated: bool | None = None


@dataclass
class MetricsReport:
    n_tasks: int
    total_actual_cost: float
    total_predicted_cost: float
    cost_prediction_error_pct: float | None
    pct_deadlines_violated: float | None
    avg_violation_ms: float | None
    avg_actual_latency_ms: float
    avg_predicted_latency_ms: float
    latency_prediction_error_pct: float | None
    pct_constraints_violated: float | None
    pct_budget_used: float | None
    warm_cold_mismatches: int
    edge_execution_count: int
    cloud_execution_count: int

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def warm_cold_mismatches(outcomes) -> int:
    return sum(1 for o in outcomes
               if not o.config.is_edge and o.predicted.start_type != o.start_type_actual)


def compute_metrics(outcomes, policy) -> MetricsReport:
    n = len(outcomes)
    actual_cost = math.fsum(o.actual_cost_usd for o in outcomes)
    pred_cost = math.fsum(o.predicted.cost_usd for o in outcomes)
    avg_actual = math.fsum(o.actual_total_ms for o in outcomes) / n if n else 0.0
    avg_pred = math.fsum(o.predicted.total_ms for o in outcomes) / n if n else 0.0
    cost_err = abs(actual_cost - pred_cost) / actual_cost * 100 if actual_cost > 0 else (
        0.0 if pred_cost == 0 else None)
    lat_err = abs(avg_actual - avg_pred) / avg_actual * 100 if avg_actual > 0 else None
    pct_dl = avg_viol = pct_cons = pct_budget = None
    if policy.kind == MIN_COST and n:
        late = [o.actual_total_ms - policy.deadline_ms for o in outcomes if o.deadline_violated]
        pct_dl = len(late) / n * 100
        avg_viol = math.fsum(late) / len(late) if late else 0.0
    if policy.kind == MIN_LATENCY and n:
        pct_cons = sum(1 for o in outcomes if o.budget_violated) / n * 100
        if policy.budget_usd > 0:
            pct_budget = actual_cost / (policy.budget_usd * n) * 100
    edge = sum(1 for o in outcomes if o.config.is_edge)
    return MetricsReport(
        n_tasks=n, total_actual_cost=actual_cost, total_predicted_cost=pred_cost,
        cost_prediction_error_pct=cost_err, pct_deadlines_violated=pct_dl,
        avg_violation_ms=avg_viol, avg_actual_latency_ms=avg_actual,
        avg_predicted_latency_ms=avg_pred, latency_prediction_error_pct=lat_err,
        pct_constraints_violated=pct_cons, pct_budget_used=pct_budget,
        warm_cold_mismatches=warm_cold_mismatches(outcomes),
        edge_execution_count=edge, cloud_execution_count=n - edge)


@dataclass
class _Task:
    index: int
    item: object
    decision: object
    actual: dict = field(default_factory=dict)
    start_type: str = "n/a-edge"
    edge_start_ms: float = 0.0
    cold_start_ms: float = 0.0


class Simulation:
    def __init__(self, workload, bundle, policy, config_set=None, mode=GENERATIVE, seed=0,
                 trace=None, noise=None, pricing=DEFAULT_PRICING, ground_truth_t_idl=None,
                 predictor_t_idl_ms=None):
        if mode not in (TRACE, GENERATIVE):
            raise ValueError(f"unknown simulation mode {mode!r}")
        if mode == TRACE and trace is None:
            raise ValueError("trace mode needs a trace")
        self.items = list(workload)
        self.bundle = bundle
        self.policy = policy
        self.mode = mode
        self.seed = int(seed)
        self.noise = noise or NoiseSpec()
        self.pricing = pricing
        self.trace_index = trace if isinstance(trace, TraceIndex) or trace is None \
            else TraceIndex.build(trace)
        configs = list(bundle.config_set if config_set is None else config_set)
        for c in configs:
            if not bundle.covers(c):
                raise SimulationError(f"config {c} not covered by the model bundle")
        self.loop = DecisionLoop(bundle, policy, configs=configs, pricing=pricing,
                                 t_idl_ms=predictor_t_idl_ms)
        t_idl = ground_truth_t_idl if ground_truth_t_idl is not None else bundle.t_idl_dist
        if not isinstance(t_idl, NormalDist):
            t_idl = NormalDist(float(t_idl), 0.0)
        self.pool = GroundTruthPool(t_idl, np.random.default_rng([self.seed, 2]))
        self.events = []
        self._seq = 0
        self.edge_queue = []
        self.edge_running = None
        self.outcomes = {}

    def _push(self, time_ms, kind, task):
        heapq.heappush(self.events, (time_ms, _PRIORITY[kind], self._seq, kind, task))
        self._seq += 1

    def _actuals(self, task, start_type=WARM):
        return actuals_for(task.item, task.decision.config, self.mode, self.trace_index,
                           self.bundle, self.noise, start_type, self.seed, task.index)

    def _on_arrival(self, now, task):
        _, decision = self.loop.step(task.item, now)
        task.decision = decision
        if decision.config.is_edge:
            task.actual = self._actuals(task)
            if self.edge_running is None:
                self._start_edge(now, task)
            else:
                self.edge_queue.append(task)
        else:
            task.actual = self._actuals(task, WARM)
            task.cold_start_ms = self._actuals(task, COLD)["start"]
            self._push(now + task.actual["upld"], CLOUD_TRIGGER, task)

    def _start_edge(self, now, task):
        self.edge_running = task
        task.edge_start_ms = now
        self._push(now + task.actual["comp"], EDGE_COMPUTE_DONE, task)

    def _on_edge_compute_done(self, now, task):
        self._push(now + task.actual["iotup"] + task.actual["store"], EDGE_STORE_DONE, task)
        self.edge_running = None
        if self.edge_queue:
            self._start_edge(now, self.edge_queue.pop(0))

    def _on_cloud_trigger(self, now, task):
        start_type, start, _ = self.pool.acquire(task.decision.config, now, task.actual["start"],
                                                 task.cold_start_ms, task.actual["comp"])
        task.start_type = start_type
        task.actual = dict(task.actual, start=start)
        self._push(now + start + task.actual["comp"] + task.actual["store"], CLOUD_DONE, task)

    def _finish(self, task):
        d = task.decision
        actual = dict(task.actual)
        if d.config.is_edge:
            actual["queue_wait"] = task.edge_start_ms - task.item.arrival_time_ms
            total = actual["queue_wait"] + actual["comp"] + actual["iotup"] + actual["store"]
        else:
            total = actual["upld"] + actual["start"] + actual["comp"] + actual["store"]
        actual_cost = cost(actual["comp"], d.config, self.pricing)
        deadline_violated = budget_violated = None
        if self.policy.kind == MIN_COST:
            deadline_violated = total > self.policy.deadline_ms
        else:
            budget_violated = actual_cost > d.allowance_usd
        self.outcomes[task.index] = SimOutcome(
            task.item.id, task.item.arrival_time_ms, d.config, d.prediction, actual, total,
            actual_cost, task.start_type, d.allowance_usd, deadline_violated, budget_violated)

    def run(self):
        for i, item in enumerate(self.items):
            self._push(item.arrival_time_ms, ARRIVAL, _Task(i, item, None))
        while self.events:
            now, _, _, kind, task = heapq.heappop(self.events)
            if kind == ARRIVAL:
                self._on_arrival(now, task)
            elif kind == CLOUD_TRIGGER:
                self._on_cloud_trigger(now, task)
            elif kind == EDGE_COMPUTE_DONE:
                self._on_edge_compute_done(now, task)
            else:
                self._finish(task)
        outcomes = [self.outcomes[i] for i in range(len(self.items))]
        return outcomes, compute_metrics(outcomes, self.policy)


def run(workload, bundle, policy, config_set=None, mode=GENERATIVE, seed=0, **kwargs):
    """Simulate ``workload``; returns ``(outcomes, MetricsReport)``."""
    if not len(workload):
        raise ValueError("workload is empty")
    return Simulation(workload, bundle, policy, config_set, mode, seed, **kwargs).run()


OUTCOME_COLUMNS = (
    "input_id", "arrival_time_ms", "config", "predicted_start_type", "actual_start_type",
    "predicted_total_ms", "actual_total_ms", "predicted_cost_usd", "actual_cost_usd",
    "predicted_queue_wait_ms", "actual_queue_wait_ms", "actual_upld_ms", "actual_start_ms",
    "actual_comp_ms", "actual_iotup_ms", "actual_store_ms", "allowance_usd",
    "deadline_violated", "budget_violated",
)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def outcomes_csv(outcomes) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OUTCOME_COLUMNS)
    for o in outcomes:
        a = o.actual
        w.writerow([_cell(v) for v in (
            o.input_id, float(o.arrival_time_ms), str(o.config), o.predicted.start_type,
            o.start_type_actual, float(o.predicted.total_ms), float(o.actual_total_ms),
            float(o.predicted.cost_usd), float(o.actual_cost_usd),
            o.predicted.breakdown.get("queue_wait"), a.get("queue_wait"), a.get("upld"),
            a.get("start"), float(a["comp"]), a.get("iotup"), float(a["store"]),
            o.allowance_usd, o.deadline_violated, o.budget_violated)])
    return buf.getvalue()


def _atomic_write(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def write_outputs(out_dir, outcomes, report, prefix=""):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(out_dir / f"{prefix}outcomes.csv", outcomes_csv(outcomes))
    _atomic_write(out_dir / f"{prefix}report.json", report.to_json())
    return out_dir / f"{prefix}outcomes.csv", out_dir / f"{prefix}report.json"


def calibrate_noise(bundle, sizes, target_cloud_mape, target_edge_mape, configs=None,
                    start_type=WARM):
    """Uniform per-pipeline log-sd whose analytic noise-floor MAPE hits the targets.

    Returns a :class:`NoiseSpec`. Cloud rows span ``configs`` (default: the
    bundle's cloud configs) with the given start type.
    """
    configs = [c for c in (configs or bundle.cloud_configs) if not c.is_edge]
    sizes = np.asarray(list(sizes), dtype=float)
    cloud = []
    for c in configs:
        comp = bundle.cloud_compute.predict_many(sizes, np.full(len(sizes), c.memory_mb))
        for s, cp in zip(sizes, comp):
            cloud.append([bundle.upload_ms(s), bundle.start_ms(c, start_type), cp,
                          bundle.cloud_store.predict()])
    edge = [[bundle.edge_compute_ms(s), bundle.iot_upload.predict(), bundle.edge_store.predict()]
            for s in sizes]
    edge = [row for row in edge if sum(row) > 0]

    def solve(rows, target):
        if target <= 0 or not rows:
            return 0.0
        lo, hi = 0.0, 3.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if noise_floor_mape(rows, mid) < target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    return NoiseSpec.uniform(solve(cloud, target_cloud_mape), solve(edge, target_edge_mape))


__all__ = [
    "TRACE", "GENERATIVE", "NoiseSpec", "SimulationError", "actuals_for", "GroundTruthPool",
    "SimOutcome", "MetricsReport", "warm_cold_mismatches", "compute_metrics", "Simulation", "run",
    "outcomes_csv", "write_outputs", "calibrate_noise", "OUTCOME_COLUMNS",
]
