"""Per-application performance model bundle: training and (de)serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..containers import EDGE, ContainerConfig
from ..workload import COLD, WARM
from .basic import (ConstantModel, LinearModel, NormalDist, fit_linear, fit_mean,
                    fit_normal, mape)
from .gbrt import GBRTHyper, GBRTModel, fit_gbrt, grid_search_cv, kfold_indices

MODEL_VERSION = "placesim-model-v1"

DEFAULT_T_IDL_MS = 27 * 60 * 1000.0
DEFAULT_RIDGE_GRID = (0.0, 1e-2, 1.0, 1e2, 1e4)
DEFAULT_GBRT_GRID = (
    GBRTHyper(n_trees=100, max_depth=3, learning_rate=0.1),
    GBRTHyper(n_trees=200, max_depth=3, learning_rate=0.1),
    GBRTHyper(n_trees=200, max_depth=4, learning_rate=0.05),
)


class TrainingError(ValueError):
    pass


def _model_from_dict(d):
    kind = d.get("kind")
    if kind == "linear":
        return LinearModel.from_dict(d)
    if kind == "constant":
        return ConstantModel.from_dict(d)
    if kind == "gbrt":
        return GBRTModel.from_dict(d)
    raise ValueError(f"unknown model kind {kind!r}")


def predict_component(model, size, memory_mb=0) -> float:
    """Predicted milliseconds from any component model; never negative."""
    return float(model.predict(size, memory_mb))


@dataclass
class PerfModelBundle:
    upload: LinearModel | GBRTModel
    edge_compute: LinearModel
    cloud_compute: GBRTModel
    warm_start: ConstantModel
    cold_start: ConstantModel
    cloud_store: ConstantModel
    edge_store: ConstantModel
    iot_upload: ConstantModel
    t_idl_ms: float = DEFAULT_T_IDL_MS
    t_idl_dist: NormalDist | None = None
    cold_start_dist: NormalDist | None = None
    config_set: list = field(default_factory=list)
    start_overrides: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    app_label: str = ""

    def __post_init__(self):
        if not self.t_idl_ms > 0:
            raise ValueError("t_idl_ms must be positive")
        if self.t_idl_dist is None:
            self.t_idl_dist = NormalDist(self.t_idl_ms, 0.0)
        if self.cold_start_dist is None:
            self.cold_start_dist = NormalDist(self.cold_start.mean_ms, self.cold_start.stddev_ms)
        self.config_set = sorted({ContainerConfig.parse(c) for c in self.config_set} | {EDGE},
                                 key=ContainerConfig.sort_key)
        self.start_overrides = {int(k): dict(v) for k, v in self.start_overrides.items()}

    @property
    def cloud_configs(self):
        return [c for c in self.config_set if not c.is_edge]

    def covers(self, config) -> bool:
        return config in self.config_set

    def start_ms(self, config, start_type) -> float:
        override = self.start_overrides.get(config.memory_mb, {})
        if start_type in override:
            return max(0.0, float(override[start_type]))
        model = self.warm_start if start_type == WARM else self.cold_start
        return model.predict()

    def upload_ms(self, size) -> float:
        return predict_component(self.upload, size, 0)

    def cloud_compute_ms(self, size, memory_mb) -> float:
        return predict_component(self.cloud_compute, size, memory_mb)

    def edge_compute_ms(self, size) -> float:
        return predict_component(self.edge_compute, size)

    def cloud_compute_many(self, size, memories):
        memories = np.asarray(memories, dtype=float)
        return self.cloud_compute.predict_many(np.full(len(memories), float(size)), memories)

    def to_dict(self):
        return {
            "version": MODEL_VERSION,
            "app_label": self.app_label,
            "upload": self.upload.to_dict(),
            "edge_compute": self.edge_compute.to_dict(),
            "cloud_compute": self.cloud_compute.to_dict(),
            "warm_start": self.warm_start.to_dict(),
            "cold_start": self.cold_start.to_dict(),
            "cloud_store": self.cloud_store.to_dict(),
            "edge_store": self.edge_store.to_dict(),
            "iot_upload": self.iot_upload.to_dict(),
            "t_idl_ms": self.t_idl_ms,
            "t_idl_dist": self.t_idl_dist.to_dict(),
            "cold_start_dist": self.cold_start_dist.to_dict(),
            "config_set": [str(c) for c in self.config_set],
            "start_overrides": {str(k): v for k, v in sorted(self.start_overrides.items())},
            "metrics": self.metrics,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        return cls(
            upload=_model_from_dict(d["upload"]),
            edge_compute=_model_from_dict(d["edge_compute"]),
            cloud_compute=_model_from_dict(d["cloud_compute"]),
            warm_start=_model_from_dict(d["warm_start"]),
            cold_start=_model_from_dict(d["cold_start"]),
            cloud_store=_model_from_dict(d["cloud_store"]),
            edge_store=_model_from_dict(d["edge_store"]),
            iot_upload=_model_from_dict(d["iot_upload"]),
            t_idl_ms=float(d["t_idl_ms"]),
            t_idl_dist=NormalDist.from_dict(d["t_idl_dist"]),
            cold_start_dist=NormalDist.from_dict(d["cold_start_dist"]),
            config_set=[ContainerConfig.parse(c) for c in d["config_set"]],
            start_overrides=d.get("start_overrides", {}),
            metrics=d.get("metrics", {}),
            app_label=d.get("app_label", ""),
        )

    def save(self, path):
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class TrainOptions:
    configs: list | None = None
    upload_model: str = "linear"
    upload_ridge_penalty: float = 0.0
    edge_ridge_grid: tuple = DEFAULT_RIDGE_GRID
    gbrt: GBRTHyper = field(default_factory=GBRTHyper)
    grid: list | None = DEFAULT_GBRT_GRID
    k_folds: int = 3
    test_fraction: float = 0.2
    seed: int = 0
    t_idl_ms: float = DEFAULT_T_IDL_MS
    t_idl_stddev_ms: float = 0.0
    t_idl_samples: list | None = None
    cold_start_ms: float | None = None
    cold_start_stddev_ms: float = 0.0
    start_overrides: dict = field(default_factory=dict)
    app_label: str = ""

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        if "gbrt" in d:
            d["gbrt"] = GBRTHyper.coerce(d["gbrt"])
        if d.get("grid"):
            d["grid"] = [GBRTHyper.coerce(h) for h in d["grid"]]
        if "edge_ridge_grid" in d:
            d["edge_ridge_grid"] = tuple(d["edge_ridge_grid"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training options {sorted(unknown)}")
        return cls(**d)


def split_inputs(input_ids, test_fraction, seed):
    """Seeded input-level train/test split (no input appears in both)."""
    ids = sorted(set(input_ids))
    perm = np.random.default_rng(seed).permutation(len(ids))
    n_test = int(round(test_fraction * len(ids)))
    if n_test >= len(ids):
        n_test = len(ids) - 1
    test = {ids[i] for i in perm[:n_test]}
    return [i for i in ids if i not in test], sorted(test)


def _fit_line_or_flat(xs, ys, penalty):
    if len(set(np.asarray(xs, float).tolist())) < 2:
        # Single distinct size: the line collapses to the sample mean.
        return LinearModel(float(np.mean(ys)), 0.0, float(penalty))
    return fit_linear(xs, ys, penalty)


def _select_ridge(xs, ys, grid, k_folds, seed):
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    if len(grid) == 1 or len(xs) < k_folds or len(set(xs.tolist())) < 2 or np.any(ys <= 0):
        return grid[0]
    folds = kfold_indices(len(xs), k_folds, seed)
    best, best_score = grid[0], math.inf
    for penalty in grid:
        scores = []
        for i, val in enumerate(folds):
            train = np.concatenate([f for j, f in enumerate(folds) if j != i])
            model = _fit_line_or_flat(xs[train], ys[train], penalty)
            scores.append(mape(model.predict_many(xs[val]), ys[val]))
        score = float(np.mean(scores))
        if score < best_score:
            best, best_score = penalty, score
    return best


def _cloud_arrays(rows, sizes):
    size = np.array([sizes[r.input_id] for r in rows], dtype=float)
    mem = np.array([r.config.memory_mb for r in rows], dtype=float)
    return size, mem


def _fit_bundle(cloud, edge, sizes, opt, configs):
    warm = [r for r in cloud if r.start_type == WARM]
    cold = [r for r in cloud if r.start_type == COLD]
    if not warm:
        raise TrainingError("trace has no warm cloud rows")
    size, mem = _cloud_arrays(cloud, sizes)
    upld = np.array([r.upld_ms for r in cloud])
    comp = np.array([r.comp_ms for r in cloud])

    if opt.upload_model == "linear":
        upload = _fit_line_or_flat(size, upld, opt.upload_ridge_penalty)
    elif opt.upload_model == "gbrt":
        upload = fit_gbrt(np.column_stack([size, np.zeros_like(size)]), upld, opt.gbrt, opt.seed)
    else:
        raise TrainingError(f"unknown upload_model {opt.upload_model!r}")

    X = np.column_stack([size, mem])
    hyper = opt.gbrt
    if opt.grid:
        hyper, _ = grid_search_cv(opt.grid, X, comp, opt.k_folds, opt.seed)
    cloud_compute = fit_gbrt(X, comp, hyper, opt.seed)

    esize = np.array([sizes[r.input_id] for r in edge], dtype=float)
    ecomp = np.array([r.comp_ms for r in edge])
    penalty = _select_ridge(esize, ecomp, tuple(opt.edge_ridge_grid), opt.k_folds, opt.seed)
    edge_compute = _fit_line_or_flat(esize, ecomp, penalty)

    if cold:
        cold_model = fit_mean([r.start_ms for r in cold])
    elif opt.cold_start_ms is not None:
        cold_model = ConstantModel(float(opt.cold_start_ms), float(opt.cold_start_stddev_ms), 0)
    else:
        raise TrainingError("trace has no cold cloud rows and no cold_start_ms option")

    if opt.t_idl_samples:
        t_idl_dist = fit_normal(opt.t_idl_samples)
        t_idl = t_idl_dist.mean_ms
    else:
        t_idl = float(opt.t_idl_ms)
        t_idl_dist = NormalDist(t_idl, float(opt.t_idl_stddev_ms))

    return PerfModelBundle(
        upload=upload,
        edge_compute=edge_compute,
        cloud_compute=cloud_compute,
        warm_start=fit_mean([r.start_ms for r in warm]),
        cold_start=cold_model,
        cloud_store=fit_mean([r.store_ms for r in cloud]),
        edge_store=fit_mean([r.store_ms for r in edge]),
        iot_upload=fit_mean([r.iotup_ms or 0.0 for r in edge]),
        t_idl_ms=t_idl,
        t_idl_dist=t_idl_dist,
        cold_start_dist=NormalDist(cold_model.mean_ms, cold_model.stddev_ms),
        config_set=[EDGE] + list(configs),
        start_overrides=opt.start_overrides,
        app_label=opt.app_label,
    )


def predicted_row_total(bundle, row, size) -> float:
    """Model prediction of a trace row's end-to-end latency, same start type."""
    if row.config.is_edge:
        return bundle.edge_compute_ms(size) + bundle.iot_upload.predict() + bundle.edge_store.predict()
    return (bundle.upload_ms(size) + bundle.start_ms(row.config, row.start_type or WARM)
            + bundle.cloud_compute_ms(size, row.config.memory_mb) + bundle.cloud_store.predict())


def _safe_mape(pred, actual):
    actual = np.asarray(actual, float)
    if actual.size == 0 or np.any(actual <= 0):
        return None
    return mape(pred, actual)


def evaluate_bundle(bundle, trace, sizes) -> dict:
    """Per-component and end-to-end MAPE of ``bundle`` over ``trace`` rows."""
    cloud = [r for r in trace if not r.config.is_edge and r.config in bundle.config_set]
    warm = [r for r in cloud if r.start_type == WARM]
    edge = [r for r in trace if r.config.is_edge]
    out = {}
    if warm:
        size, mem = _cloud_arrays(warm, sizes)
        out["upload"] = _safe_mape(bundle.upload.predict_many(size, np.zeros_like(size)),
                                   [r.upld_ms for r in warm])
        out["cloud_compute"] = _safe_mape(bundle.cloud_compute.predict_many(size, mem),
                                          [r.comp_ms for r in warm])
        out["warm_start"] = _safe_mape([bundle.warm_start.predict()] * len(warm),
                                       [r.start_ms for r in warm])
        out["cloud_store"] = _safe_mape([bundle.cloud_store.predict()] * len(warm),
                                        [r.store_ms for r in warm])
        out["cloud_end_to_end"] = _safe_mape(
            [predicted_row_total(bundle, r, sizes[r.input_id]) for r in warm],
            [r.total_ms for r in warm])
    if edge:
        esize = np.array([sizes[r.input_id] for r in edge], dtype=float)
        out["edge_compute"] = _safe_mape(bundle.edge_compute.predict_many(esize),
                                         [r.comp_ms for r in edge])
        out["iot_upload"] = _safe_mape([bundle.iot_upload.predict()] * len(edge),
                                       [r.iotup_ms or 0.0 for r in edge])
        out["edge_store"] = _safe_mape([bundle.edge_store.predict()] * len(edge),
                                       [r.store_ms for r in edge])
        out["edge_end_to_end"] = _safe_mape(
            [predicted_row_total(bundle, r, sizes[r.input_id]) for r in edge],
            [r.total_ms for r in edge])
    return out


def train_bundle(trace, sizes, options=None) -> PerfModelBundle:
    """Fit every component model on an 80:20 input-level split of ``trace``.

    The returned bundle is fitted on the training inputs; ``bundle.metrics``
    holds held-out MAPE per component (empty when the split leaves no test
    inputs).
    """
    opt = options if isinstance(options, TrainOptions) else TrainOptions.from_dict(options)
    missing = sorted({r.input_id for r in trace} - set(sizes))
    if missing:
        raise TrainingError(f"no size for inputs {missing[:5]}")
    present = {r.config for r in trace if not r.config.is_edge}
    if opt.configs is None:
        configs = sorted(present, key=ContainerConfig.sort_key)
    else:
        configs = [ContainerConfig.parse(c) for c in opt.configs]
        for c in configs:
            if c.is_edge:
                continue
            if c not in present:
                raise TrainingError(f"trace has no rows for config {c} MB")
        configs = [c for c in configs if not c.is_edge]
    if not configs:
        raise TrainingError("trace has no cloud rows")
    if not any(r.config.is_edge for r in trace):
        raise TrainingError("trace has no rows for config edge")

    keep = set(configs)
    train_ids, test_ids = split_inputs([r.input_id for r in trace], opt.test_fraction, opt.seed)
    train_ids = set(train_ids)
    train_rows = [r for r in trace if r.input_id in train_ids]
    cloud = [r for r in train_rows if r.config in keep]
    edge = [r for r in train_rows if r.config.is_edge]
    if not edge:
        raise TrainingError("training split has no rows for config edge")
    bundle = _fit_bundle(cloud, edge, sizes, opt, configs)
    if test_ids:
        test_set = set(test_ids)
        held_out = [r for r in trace if r.input_id in test_set]
        bundle.metrics = {"held_out_mape": evaluate_bundle(bundle, held_out, sizes),
                          "n_train_inputs": len(train_ids), "n_test_inputs": len(test_ids)}
    else:
        bundle.metrics = {"held_out_mape": {}, "n_train_inputs": len(train_ids), "n_test_inputs": 0}
    return bundle
