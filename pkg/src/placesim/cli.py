"""Command-line entry point: ``placesim {train,simulate,sweep,derive-configs}``.

Every subcommand reads a JSON run configuration (``--config``); relative
paths inside it resolve against the config file's directory. Flags override
file values. Exit codes: 0 success, 1 runtime error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .containers import EDGE, ContainerConfig
from .engine import PolicySpec, derive_config_set
from .models import PerfModelBundle, TrainOptions, train_bundle
from .pricing import PricingPolicy
from .sim import GENERATIVE, TRACE, NoiseSpec, run, write_outputs
from .workload import generate_arrivals, load_trace, load_workload

SWEEP_PARAMS = ("alpha", "deadline_ms", "budget_usd")
SUMMARY_COLUMNS = (
    "param", "value", "n_tasks", "avg_actual_latency_ms", "avg_predicted_latency_ms",
    "latency_prediction_error_pct", "total_actual_cost", "total_predicted_cost",
    "cost_prediction_error_pct", "pct_deadlines_violated", "avg_violation_ms",
    "pct_constraints_violated", "pct_budget_used", "warm_cold_mismatches",
    "edge_execution_count", "cloud_execution_count",
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    base_dir: Path
    paths: dict = field(default_factory=dict)
    policy: PolicySpec | None = None
    pricing: PricingPolicy = field(default_factory=PricingPolicy)
    arrivals: dict = field(default_factory=dict)
    config_set: object = "all"
    derive_policy: PolicySpec | None = None
    mode: str = TRACE
    seed: int = 0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    training: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    app_label: str = ""

    def path(self, key, required=True, must_exist=True):
        value = self.paths.get(key)
        if value is None:
            if key == "model" and "out" in self.paths:
                value = str(Path(self.paths["out"]) / "model.json")
            elif required:
                raise ConfigError(f"config is missing paths.{key}")
            else:
                return None
        p = Path(value)
        if not p.is_absolute():
            p = self.base_dir / p
        if must_exist and not p.exists():
            raise ConfigError(f"{key} file not found: {p}")
        return p

    @property
    def out_dir(self):
        return self.path("out", must_exist=False)


def load_config(path, overrides=None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None and k != "out"})
    if overrides and overrides.get("out") is not None:
        raw.setdefault("paths", {})["out"] = str(Path(overrides["out"]).resolve())
    try:
        cfg = RunConfig(
            base_dir=path.resolve().parent,
            paths=dict(raw.get("paths", {})),
            policy=PolicySpec.from_dict(raw["policy"]) if "policy" in raw else None,
            pricing=PricingPolicy.from_dict(raw.get("pricing")),
            arrivals=dict(raw.get("arrivals", {})),
            config_set=raw.get("config_set", "all"),
            derive_policy=(PolicySpec.from_dict(raw["derive"]["policy"])
                           if raw.get("derive", {}).get("policy") else None),
            mode=raw.get("mode", TRACE),
            seed=int(raw.get("seed", 0)),
            noise=NoiseSpec.from_dict(raw.get("noise")),
            training=dict(raw.get("training", {})),
            sweep=dict(raw.get("sweep", {})),
            app_label=raw.get("app_label", ""),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if cfg.mode not in (TRACE, GENERATIVE):
        raise ConfigError(f"mode must be trace or generative, got {cfg.mode!r}")
    return cfg


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _workload(cfg, key, seed_offset=0):
    """Load a workload file, generating arrivals from ``cfg.arrivals`` if it has none."""
    path = cfg.path(key)
    if _has_arrivals(path):
        return load_workload(path, app_label=cfg.app_label)
    spec = cfg.arrivals
    arrivals = generate_arrivals(_count_rows(path), spec.get("mode", "poisson"),
                                 float(spec.get("rate_per_s", 4.0)),
                                 int(spec.get("seed", cfg.seed + seed_offset)))
    return load_workload(path, arrivals=arrivals, app_label=cfg.app_label)


def _resolve_config_set(cfg, bundle, policy):
    spec = cfg.config_set
    if spec == "all" or spec is None:
        return list(bundle.config_set)
    if spec == "derive":
        train_wl = _workload(cfg, "train_workload", seed_offset=1)
        return derive_config_set(train_wl, cfg.derive_policy or policy, bundle,
                                 pricing=cfg.pricing)
    if isinstance(spec, list):
        try:
            configs = [ContainerConfig.parse(c) for c in spec]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if EDGE not in configs:
            configs.append(EDGE)
        return configs
    raise ConfigError(f"config_set must be 'all', 'derive' or a list, got {spec!r}")


def cmd_train(cfg):
    trace_path = cfg.path("train_trace")
    wl_path = cfg.path("train_workload")
    out = cfg.out_dir
    trace = load_trace(trace_path)
    # training only needs sizes
    workload = load_workload(wl_path, arrivals=[0.0] * _count_rows(wl_path))
    options = dict(cfg.training)
    options.setdefault("seed", cfg.seed)
    options.setdefault("app_label", cfg.app_label)
    try:
        options = TrainOptions.from_dict(options)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"training options: {exc}") from None
    bundle = train_bundle(trace, workload.sizes(), options)
    model_path = cfg.path("model", must_exist=False)
    model_path.parent.mkdir(parents=True, exist_ok=True)
    bundle.save(model_path)
    table = mape_table(bundle)
    _atomic_write(out / "mape.csv", table)
    constants = {name: getattr(bundle, name).mean_ms
                 for name in ("warm_start", "cold_start", "cloud_store", "iot_upload", "edge_store")}
    report = {"model": str(model_path), "constants_ms": constants, **bundle.metrics}
    _atomic_write(out / "train_report.json", json.dumps(report, indent=1, sort_keys=True) + "\n")
    print(table, end="")
    print("constants (ms): " + ", ".join(f"{k}={v:.6g}" for k, v in constants.items()))
    return 0


def mape_table(bundle) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("component", "held_out_mape_pct"))
    for name, value in sorted(bundle.metrics.get("held_out_mape", {}).items()):
        w.writerow((name, "" if value is None else f"{value:.4f}"))
    return buf.getvalue()


def _count_rows(path):
    with Path(path).open(encoding="utf-8") as fh:
        return max(0, sum(1 for _ in fh) - 1)


def _has_arrivals(path):
    with Path(path).open(encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    return "arrival_time_ms" in header


def _simulate(cfg, policy, bundle=None):
    if policy is None:
        raise ConfigError("config is missing a policy section")
    bundle = bundle or PerfModelBundle.load(cfg.path("model"))
    workload = _workload(cfg, "workload")
    trace = load_trace(cfg.path("trace")) if cfg.mode == TRACE else None
    configs = _resolve_config_set(cfg, bundle, policy)
    return run(workload, bundle, policy, configs, cfg.mode, cfg.seed, trace=trace,
               noise=cfg.noise, pricing=cfg.pricing)


def cmd_simulate(cfg):
    outcomes, report = _simulate(cfg, cfg.policy)
    write_outputs(cfg.out_dir, outcomes, report)
    print(report.to_json(), end="")
    return 0


def _format_value(v):
    return repr(float(v))


def cmd_sweep(cfg):
    param = cfg.sweep.get("param")
    values = cfg.sweep.get("values")
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep.param must be one of {SWEEP_PARAMS}, got {param!r}")
    if not values:
        raise ConfigError("sweep.values must be a nonempty list")
    if cfg.policy is None:
        raise ConfigError("config is missing a policy section")
    bundle = PerfModelBundle.load(cfg.path("model"))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for value in values:
        try:
            policy = cfg.policy.replace(**{param: float(value)})
        except ValueError as exc:
            raise ConfigError(f"sweep value {value!r}: {exc}") from None
        outcomes, report = _simulate(cfg, policy, bundle)
        write_outputs(cfg.out_dir / "sweep" / f"{param}={_format_value(value)}", outcomes, report)
        d = report.to_dict()
        w.writerow([param, _format_value(value)] + ["" if d[c] is None else repr(d[c])
                                                    for c in SUMMARY_COLUMNS[2:]])
    _atomic_write(cfg.out_dir / "summary.csv", buf.getvalue())
    print(buf.getvalue(), end="")
    return 0


def cmd_derive_configs(cfg):
    if cfg.policy is None:
        raise ConfigError("config is missing a policy section")
    bundle = PerfModelBundle.load(cfg.path("model"))
    universe = bundle.config_set
    if isinstance(cfg.config_set, list):
        universe = _resolve_config_set(cfg, bundle, cfg.policy)
    workload = _workload(cfg, "train_workload", seed_offset=1)
    chosen = derive_config_set(workload, cfg.derive_policy or cfg.policy, bundle, universe,
                               pricing=cfg.pricing)
    text = json.dumps([str(c) for c in chosen]) + "\n"
    _atomic_write(cfg.out_dir / "config_set.json", text)
    print(text, end="")
    return 0


COMMANDS = {"train": cmd_train, "simulate": cmd_simulate, "sweep": cmd_sweep,
            "derive-configs": cmd_derive_configs}


def build_parser():
    parser = argparse.ArgumentParser(prog="placesim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override paths.out")
        p.add_argument("--mode", choices=(TRACE, GENERATIVE), help="override the simulation mode")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, {"seed": args.seed, "mode": args.mode, "out": args.out})
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"placesim: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, LookupError) as exc:
        print(f"placesim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
