"""Decision engine: placement policies, surplus budget and the edge FIFO queue.

The engine's edge queue is a belief model driven by predicted compute times,
like the predictor's CIL; actual executions live in the simulator.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .containers import EDGE, ContainerConfig
from .predictor import Predictor

MIN_COST = "min_cost"
MIN_LATENCY = "min_latency"


class EngineStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    deadline_ms: float | None = None
    budget_usd: float | None = None
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind == MIN_COST:
            if self.deadline_ms is None or not self.deadline_ms > 0:
                raise ValueError("min_cost policy needs deadline_ms > 0")
        elif self.kind == MIN_LATENCY:
            if self.budget_usd is None or not self.budget_usd >= 0:
                raise ValueError("min_latency policy needs budget_usd >= 0")
            if not 0 <= self.alpha <= 1:
                raise ValueError("alpha must be in [0, 1]")
        else:
            raise ValueError(f"unknown policy kind {self.kind!r}")

    @classmethod
    def min_cost(cls, deadline_ms):
        return cls(MIN_COST, deadline_ms=deadline_ms)

    @classmethod
    def min_latency(cls, budget_usd, alpha=0.0):
        return cls(MIN_LATENCY, budget_usd=budget_usd, alpha=alpha)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(d.pop("kind"), **d)

    def to_dict(self):
        if self.kind == MIN_COST:
            return {"kind": self.kind, "deadline_ms": self.deadline_ms}
        return {"kind": self.kind, "budget_usd": self.budget_usd, "alpha": self.alpha}

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return PolicySpec.from_dict(d)


@dataclass
class QueuedTask:
    input_id: str
    predicted_comp_ms: float
    enqueued_ms: float


@dataclass
class EngineState:
    surplus_usd: float = 0.0
    edge_queue: deque = field(default_factory=deque)
    edge_busy_until_ms: float = 0.0
    edge_running: QueuedTask | None = None
    completed: list = field(default_factory=list)


@dataclass(frozen=True)
class PlacementDecision:
    config: ContainerConfig
    prediction: object
    feasible_set: tuple
    allowance_usd: float | None = None


def edge_queue_wait(state, now_ms) -> float:
    """Predicted wait before a new edge task starts computing."""
    running = max(0.0, state.edge_busy_until_ms - now_ms) if state.edge_running else 0.0
    return running + sum(t.predicted_comp_ms for t in state.edge_queue)


def enqueue_edge(state, input_id, predicted_comp_ms, now_ms) -> EngineState:
    task = QueuedTask(input_id, float(predicted_comp_ms), now_ms)
    if state.edge_running is None and not state.edge_queue:
        state.edge_running = task
        state.edge_busy_until_ms = now_ms + task.predicted_comp_ms
    else:
        state.edge_queue.append(task)
    return state


def complete_edge(state, now_ms) -> EngineState:
    """Finish the running edge task; the queue head starts at its finish time."""
    if state.edge_running is None:
        raise EngineStateError("no edge task is running")
    if now_ms < state.edge_busy_until_ms:
        raise EngineStateError(
            f"completion at {now_ms} before predicted finish {state.edge_busy_until_ms}")
    state.completed.append(state.edge_running.input_id)
    finished = state.edge_busy_until_ms
    if state.edge_queue:
        state.edge_running = state.edge_queue.popleft()
        state.edge_busy_until_ms = finished + state.edge_running.predicted_comp_ms
    else:
        state.edge_running = None
    return state


def advance_edge(state, now_ms) -> EngineState:
    """Apply every predicted edge completion at or before ``now_ms``."""
    while state.edge_running is not None and state.edge_busy_until_ms <= now_ms:
        complete_edge(state, now_ms)
    return state


def _memory_key(config):
    return math.inf if config.is_edge else config.memory_mb


def latency_key(p):
    """Min-latency order: latency, then cost, then memory with edge last."""
    return (p.total_ms, p.cost_usd, p.config.is_edge, _memory_key(p.config))


def cost_key(p):
    """Min-cost order: cost, then latency, then memory with edge last."""
    return (p.cost_usd, p.total_ms, p.config.is_edge, _memory_key(p.config))


def decide_min_latency(predictions, state, policy) -> PlacementDecision:
    """Cheapest-feasible-by-latency choice under the per-task allowance.

    Feasible: cost <= budget + alpha * surplus. Updates ``state.surplus_usd``
    by ``budget - cost`` of the chosen config.
    """
    if policy.kind != MIN_LATENCY:
        raise ValueError("decide_min_latency needs a min_latency policy")
    if not any(p.config.is_edge for p in predictions):
        raise ValueError("predictions must include edge")
    allowance = policy.budget_usd + policy.alpha * state.surplus_usd
    feasible = [p for p in predictions if p.cost_usd <= allowance]
    choice = min(feasible, key=latency_key)
    state.surplus_usd = state.surplus_usd + policy.budget_usd - choice.cost_usd
    if state.surplus_usd < 0:
        raise EngineStateError(f"surplus went negative ({state.surplus_usd})")
    return PlacementDecision(choice.config, choice, tuple(p.config for p in feasible), allowance)


def decide_min_cost(predictions, state, policy) -> PlacementDecision:
    """Cheapest config whose predicted latency meets the deadline; edge if none does.

    Edge latency is expected to already include the predicted queue wait.
    """
    if policy.kind != MIN_COST:
        raise ValueError("decide_min_cost needs a min_cost policy")
    feasible = [p for p in predictions if p.total_ms <= policy.deadline_ms]
    if feasible:
        choice = min(feasible, key=cost_key)
    else:
        choice = next((p for p in predictions if p.config.is_edge), None)
        if choice is None:
            raise ValueError("no feasible config and no edge prediction")
    return PlacementDecision(choice.config, choice, tuple(p.config for p in feasible))


def decide(predictions, state, policy) -> PlacementDecision:
    if policy.kind == MIN_LATENCY:
        return decide_min_latency(predictions, state, policy)
    return decide_min_cost(predictions, state, policy)


class DecisionLoop:
    """Per-input predict -> decide -> update CIL / edge queue sequence.

    Holds only predicted state; the simulator layers actual execution on top.
    """

    def __init__(self, bundle, policy, configs=None, pricing=None, t_idl_ms=None):
        kwargs = {} if pricing is None else {"pricing": pricing}
        self.predictor = Predictor(bundle, configs=configs, t_idl_ms=t_idl_ms, **kwargs)
        self.policy = policy
        self.state = EngineState()

    @property
    def configs(self):
        return self.predictor.configs

    def step(self, item, now_ms=None):
        now = item.arrival_time_ms if now_ms is None else now_ms
        advance_edge(self.state, now)
        wait = edge_queue_wait(self.state, now)
        predictions = self.predictor.predict(item, now, wait)
        decision = decide(predictions, self.state, self.policy)
        if decision.config.is_edge:
            enqueue_edge(self.state, item.id, decision.prediction.comp_ms, now)
        else:
            self.predictor.update_cil(decision.config, now, decision.prediction)
        return predictions, decision

    def run(self, items):
        return [self.step(it)[1] for it in items]


def derive_config_set(workload, policy, bundle, universe=None, pricing=None) -> list:
    """Configs the decision loop selects at least once over ``workload`` (edge always included)."""
    universe = list(bundle.config_set if universe is None else universe)
    if EDGE not in universe:
        universe.append(EDGE)
    loop = DecisionLoop(bundle, policy, configs=universe, pricing=pricing)
    chosen = {d.config for d in loop.run(workload)} | {EDGE}
    return sorted(chosen, key=ContainerConfig.sort_key)
