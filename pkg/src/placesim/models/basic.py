"""Closed-form component models: linear/ridge fits, constant means, normals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class LinearModel:
    """``y = intercept + slope * size``, clamped at zero on prediction."""

    intercept: float
    slope: float
    ridge_penalty: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.intercept) and math.isfinite(self.slope)):
            raise ValueError("linear coefficients must be finite")

    def predict(self, size, memory_mb=None):
        return max(0.0, self.intercept + self.slope * float(size))

    def predict_many(self, sizes, memory_mb=None):
        return np.maximum(0.0, self.intercept + self.slope * np.asarray(sizes, dtype=float))

    def to_dict(self):
        return {"kind": "linear", "intercept": self.intercept, "slope": self.slope,
                "ridge_penalty": self.ridge_penalty}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["intercept"]), float(d["slope"]), float(d.get("ridge_penalty", 0.0)))


@dataclass(frozen=True)
class ConstantModel:
    mean_ms: float
    stddev_ms: float = 0.0
    n_samples: int = 1

    def predict(self, size=None, memory_mb=None):
        return max(0.0, self.mean_ms)

    def predict_many(self, sizes, memory_mb=None):
        return np.full(len(sizes), max(0.0, self.mean_ms))

    def to_dict(self):
        return {"kind": "constant", "mean_ms": self.mean_ms, "stddev_ms": self.stddev_ms,
                "n_samples": self.n_samples}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["mean_ms"]), float(d.get("stddev_ms", 0.0)), int(d.get("n_samples", 1)))


@dataclass(frozen=True)
class NormalDist:
    mean_ms: float
    stddev_ms: float = 0.0

    def __post_init__(self):
        if self.stddev_ms < 0:
            raise ValueError("stddev must be >= 0")

    def sample(self, rng, size=None):
        """Draw from N(mean, sd) truncated at 0 by clamping."""
        if self.stddev_ms == 0:
            if size is None:
                return max(0.0, self.mean_ms)
            return np.full(size, max(0.0, self.mean_ms))
        draw = rng.normal(self.mean_ms, self.stddev_ms, size=size)
        return max(0.0, float(draw)) if size is None else np.maximum(0.0, draw)

    def to_dict(self):
        return {"mean_ms": self.mean_ms, "stddev_ms": self.stddev_ms}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["mean_ms"]), float(d.get("stddev_ms", 0.0)))


def fit_linear(xs, ys, ridge_penalty=0.0) -> LinearModel:
    """Least squares line with an L2 penalty on the slope only.

    Minimises ``sum((y - a - b*x)**2) + ridge_penalty * b**2``; the intercept
    is unpenalised so the solution centres on the sample means.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"xs and ys must be 1-d and equal length ({x.shape} vs {y.shape})")
    if len(x) < 2:
        raise ValueError("need at least two points")
    if ridge_penalty < 0:
        raise ValueError("ridge_penalty must be >= 0")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise FitError("non-finite training data")
    x_mean, y_mean = x.mean(), y.mean()
    dx = x - x_mean
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise FitError("all xs identical; slope is undetermined")
    slope = float(dx @ (y - y_mean)) / (sxx + ridge_penalty)
    return LinearModel(float(y_mean - slope * x_mean), slope, float(ridge_penalty))


def fit_mean(samples) -> ConstantModel:
    s = np.asarray(samples, dtype=float)
    if s.size == 0:
        raise ValueError("fit_mean needs at least one sample")
    return ConstantModel(float(s.mean()), float(s.std()), int(s.size))


def fit_normal(samples) -> NormalDist:
    m = fit_mean(samples)
    return NormalDist(m.mean_ms, m.stddev_ms)


def mape(predicted, actual) -> float:
    """Mean absolute percentage error, in percent."""
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise ValueError("predicted and actual lengths differ")
    if a.size == 0:
        raise ValueError("mape of empty sequences")
    if np.any(a <= 0):
        raise ValueError("actual values must be > 0")
    return float(np.mean(np.abs(p - a) / a) * 100.0)


def noise_floor_mape(components, sigma) -> float:
    """Analytic MAPE of the exact-mean predictor under multiplicative noise.

    ``components`` is an (n_rows, n_components) array of noise-free component
    times; each is scaled by an independent mean-one lognormal factor with
    log-sd ``sigma``. Uses the first-order normal approximation of the summed
    perturbation, so ``E|T - T_hat| / T_hat = sqrt(2/pi) * s * ||c|| / sum(c)``
    with ``s**2 = exp(sigma**2) - 1``.
    """
    c = np.atleast_2d(np.asarray(components, dtype=float))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (c.shape[1],))
    s = np.sqrt(np.expm1(sigma ** 2))
    spread = np.sqrt(((c * s) ** 2).sum(axis=1))
    return float(np.mean(math.sqrt(2.0 / math.pi) * spread / c.sum(axis=1)) * 100.0)
