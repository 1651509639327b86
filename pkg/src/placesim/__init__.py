"""Dynamic edge/cloud placement of serverless tasks.

Performance models, a container-aware latency/cost predictor, the two
placement policies, and an event-driven simulator.
"""

from .containers import EDGE, ContainerConfig, studied_configs
from .engine import DecisionLoop, EngineState, PolicySpec, derive_config_set
from .models import PerfModelBundle, TrainOptions, train_bundle
from .pricing import PricingPolicy, cost
from .predictor import CIL, Prediction, Predictor
from .sim import NoiseSpec, run
from .workload import InputItem, TraceRow, Workload, generate_arrivals, load_trace, load_workload

__version__ = "0.1.0"

__all__ = [
    "EDGE", "ContainerConfig", "studied_configs", "DecisionLoop", "EngineState", "PolicySpec",
    "derive_config_set", "PerfModelBundle", "TrainOptions", "train_bundle", "PricingPolicy",
    "cost", "CIL", "Prediction", "Predictor", "NoiseSpec", "run", "InputItem", "TraceRow",
    "Workload", "generate_arrivals", "load_trace", "load_workload",
]
