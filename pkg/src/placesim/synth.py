"""Synthetic measurement traces.

``AppProfile`` is a ground-truth latency surface for one application, used
to build the bundled fixtures. ``trace_from_bundle`` samples a trace from an
already-trained (or hand-built) bundle, which gives exact round-trip checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .containers import EDGE, ContainerConfig, studied_configs
from .sim import GENERATIVE, NoiseSpec, actuals_for
from .workload import COLD, WARM, InputItem, TraceRow


@dataclass(frozen=True)
class AppProfile:
    name: str = "fd"
    size_lo: float = 250_000.0
    size_hi: float = 2_500_000.0
    upload_intercept: float = 100.0
    upload_slope: float = 1.6e-4
    upload_sigma: float = 0.15
    comp_base: float = 80.0
    comp_coef: float = 6.5e-4
    comp_ref_mb: float = 1536.0
    comp_exponent: float = 0.9
    comp_saturation_mb: float = 1792.0
    comp_sigma: float = 0.10
    edge_intercept: float = 500.0
    edge_slope: float = 3.2e-3
    edge_sigma: float = 0.03
    warm_ms: float = 163.0
    warm_spread: float = 25.0
    cold_ms: float = 1500.0
    cold_spread: float = 150.0
    cloud_store_ms: float = 584.0
    store_spread: float = 60.0
    iotup_ms: float = 25.0
    iotup_sd: float = 3.0
    edge_store_ms: float = 583.0
    edge_store_sd: float = 40.0

    def upload(self, size):
        return self.upload_intercept + self.upload_slope * np.asarray(size, float)

    def cloud_compute(self, size, memory_mb):
        share = self.comp_ref_mb / np.minimum(np.asarray(memory_mb, float), self.comp_saturation_mb)
        return self.comp_base + self.comp_coef * np.asarray(size, float) * share ** self.comp_exponent

    def edge_compute(self, size):
        return self.edge_intercept + self.edge_slope * np.asarray(size, float)


FD_PROFILE = AppProfile()


def _symmetric(rng, center, spread, n):
    """``n`` values whose mean is exactly ``center``: mirrored pairs plus the centre if odd."""
    half = np.round(rng.uniform(0, spread, n // 2), 1)
    vals = np.concatenate([center + half, center - half, [center] * (n % 2)])
    return rng.permutation(vals)


def profile_trace(profile, n_inputs, configs=None, n_cold_inputs=0, seed=0, id_prefix="img"):
    """Trace rows and input sizes drawn from ``profile``.

    Every input gets one warm row per cloud config plus an edge row; the
    first ``n_cold_inputs`` inputs also get a cold row per cloud config. Start
    and store times are mirrored within each input so their means equal the
    profile constants for any input-level split.
    """
    rng = np.random.default_rng(seed)
    configs = [c for c in (configs or studied_configs(False)) if not c.is_edge]
    ids = [f"{id_prefix}{k:05d}" for k in range(n_inputs)]
    sizes = np.round(rng.uniform(profile.size_lo, profile.size_hi, n_inputs))
    rows = []
    nc = len(configs)
    for k, (iid, size) in enumerate(zip(ids, sizes)):
        kinds = [WARM] + ([COLD] if k < n_cold_inputs else [])
        for kind in kinds:
            if kind == WARM:
                starts = _symmetric(rng, profile.warm_ms, profile.warm_spread, nc)
            else:
                starts = _symmetric(rng, profile.cold_ms, profile.cold_spread, nc)
            stores = _symmetric(rng, profile.cloud_store_ms, profile.store_spread, nc)
            upld = profile.upload(size) * np.exp(rng.normal(0, profile.upload_sigma, nc))
            mems = np.array([c.memory_mb for c in configs])
            comp = profile.cloud_compute(size, mems) * np.exp(rng.normal(0, profile.comp_sigma, nc))
            for j, c in enumerate(configs):
                rows.append(TraceRow(iid, c, comp_ms=round(float(comp[j]), 3),
                                     store_ms=float(stores[j]), upld_ms=round(float(upld[j]), 3),
                                     start_ms=float(starts[j]), start_type=kind))
        ecomp = profile.edge_compute(size) * np.exp(rng.normal(0, profile.edge_sigma))
        rows.append(TraceRow(iid, EDGE, comp_ms=round(float(ecomp), 3),
                             store_ms=round(float(rng.normal(profile.edge_store_ms, profile.edge_store_sd)), 3),
                             iotup_ms=round(float(max(0.0, rng.normal(profile.iotup_ms, profile.iotup_sd))), 3),
                             start_type=WARM))
    return rows, dict(zip(ids, sizes.tolist()))


def trace_from_bundle(bundle, sizes, configs=None, noise=None, seed=0, n_cold_inputs=0):
    """Trace sampled from ``bundle`` in generative mode.

    ``sizes`` maps input id to size. With zero noise every row equals the
    bundle's own predictions.
    """
    noise = noise or NoiseSpec()
    configs = [ContainerConfig.parse(c) for c in (configs or bundle.cloud_configs)]
    rows = []
    for k, (iid, size) in enumerate(sizes.items()):
        item = InputItem(iid, float(size))
        kinds = [WARM] + ([COLD] if k < n_cold_inputs else [])
        for c in configs:
            for kind in kinds:
                a = actuals_for(item, c, GENERATIVE, bundle=bundle, noise=noise, start_type=kind,
                                seed=seed, input_index=k)
                rows.append(TraceRow(iid, c, comp_ms=a["comp"], store_ms=a["store"],
                                     upld_ms=a["upld"], start_ms=a["start"], start_type=kind))
        a = actuals_for(item, EDGE, GENERATIVE, bundle=bundle, noise=noise, seed=seed, input_index=k)
        rows.append(TraceRow(iid, EDGE, comp_ms=a["comp"], store_ms=a["store"], iotup_ms=a["iotup"],
                             start_type=WARM))
    return rows
