"""Quantized GB-second execution pricing. Edge executions cost nothing."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class PricingPolicy:
    usd_per_gb_s: float = 1.667e-6
    quantum_ms: int = 100
    per_request_usd: float = 0.0
    gb_divisor_mb: int = 1024

    def __post_init__(self):
        if not self.usd_per_gb_s > 0:
            raise ValueError("usd_per_gb_s must be positive")
        if int(self.quantum_ms) != self.quantum_ms or self.quantum_ms <= 0:
            raise ValueError("quantum_ms must be a positive integer")
        if self.per_request_usd < 0:
            raise ValueError("per_request_usd must be >= 0")
        if int(self.gb_divisor_mb) != self.gb_divisor_mb or self.gb_divisor_mb <= 0:
            raise ValueError("gb_divisor_mb must be a positive integer")

    @classmethod
    def from_dict(cls, d):
        return cls(**(d or {}))

    def to_dict(self):
        return asdict(self)


DEFAULT_PRICING = PricingPolicy()


def billed_ms(comp_ms: float, policy: PricingPolicy = DEFAULT_PRICING) -> int:
    """Round to the nearest ms, then up to a whole number of quanta (minimum one)."""
    if not math.isfinite(comp_ms) or comp_ms < 0:
        raise ValueError(f"compute time must be finite and >= 0, got {comp_ms}")
    ms = math.floor(comp_ms + 0.5)
    quanta = max(1, -(-ms // policy.quantum_ms))
    return quanta * policy.quantum_ms


def cost(comp_ms: float, config, policy: PricingPolicy = DEFAULT_PRICING) -> float:
    """Execution cost in USD of ``comp_ms`` of compute on ``config``."""
    if not math.isfinite(comp_ms) or comp_ms < 0:
        raise ValueError(f"compute time must be finite and >= 0, got {comp_ms}")
    if config.is_edge:
        return 0.0
    gb = config.memory_mb / policy.gb_divisor_mb
    return billed_ms(comp_ms, policy) / 1000.0 * gb * policy.usd_per_gb_s + policy.per_request_usd
