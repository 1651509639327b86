import math
from collections import namedtuple

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from placesim.containers import EDGE, ContainerConfig
from placesim.engine import PolicySpec
from placesim.models import NormalDist, noise_floor_mape
from placesim.pricing import cost
from placesim.sim import (GENERATIVE, TRACE, GroundTruthPool, NoiseSpec, SimulationError,
                          actuals_for, calibrate_noise, outcomes_csv, run,
                          warm_cold_mismatches, write_outputs)
from placesim.workload import (COLD, WARM, InputItem, TraceIndex, TraceRow, Workload,
                               generate_arrivals, load_workload)

from support import FIXTURES, scan_min_cost, scan_min_latency, table_bundle

M1024 = ContainerConfig.cloud(1024)
M2048 = ContainerConfig.cloud(2048)


def wl(times, sizes=None, prefix="t"):
    sizes = sizes or [1.0] * len(times)
    return Workload([InputItem(f"{prefix}{k}", float(s), float(t))
                     for k, (t, s) in enumerate(zip(times, sizes))])


def test_trace_warm_row_verbatim_and_cold_replacement():
    row = TraceRow("a", M1024, comp_ms=512.0, store_ms=590.0, upld_ms=211.0, start_ms=171.0,
                   start_type=WARM)
    idx = TraceIndex.build([row])
    b = table_bundle({1024: 500.0}, cold=1500.0, cold_sd=0.0)
    item = InputItem("a", 1.0)
    assert actuals_for(item, M1024, TRACE, idx, b, start_type=WARM) == \
        {"upld": 211.0, "start": 171.0, "comp": 512.0, "store": 590.0}
    assert actuals_for(item, M1024, TRACE, idx, b, start_type=COLD)["start"] == 1500.0
    with pytest.raises(SimulationError, match="'b'.*2048"):
        actuals_for(InputItem("b", 1.0), M2048, TRACE, idx, b)


def test_trace_edge_row_missing_iotup_is_zero():
    idx = TraceIndex.build([TraceRow("a", EDGE, comp_ms=100.0, store_ms=5.0)])
    got = actuals_for(InputItem("a", 1.0), EDGE, TRACE, idx)
    assert got == {"comp": 100.0, "iotup": 0.0, "store": 5.0}


def test_generative_zero_noise_equals_prediction():
    b = table_bundle({1024: 500.0}, upld=100, upld_slope=1e-3, edge_slope=2e-3)
    item = InputItem("a", 2e5)
    got = actuals_for(item, M1024, GENERATIVE, bundle=b, start_type=COLD)
    assert got == {"upld": 300.0, "start": 1500.0, "comp": 500.0, "store": 584.0}
    got = actuals_for(item, EDGE, GENERATIVE, bundle=b)
    assert got == {"comp": 2400.0, "iotup": 25.0, "store": 583.0}


def test_generative_noise_is_mean_one_and_seeded():
    b = table_bundle({1024: 500.0})
    noise = NoiseSpec.uniform(0.3, 0.3)
    comps = [actuals_for(InputItem("a", 1.0), M1024, GENERATIVE, bundle=b, noise=noise, seed=1,
                         input_index=k)["comp"] for k in range(20000)]
    assert np.mean(comps) == pytest.approx(500.0, rel=0.01)
    again = actuals_for(InputItem("a", 1.0), M1024, GENERATIVE, bundle=b, noise=noise, seed=1,
                        input_index=7)
    assert again["comp"] == comps[7]


def test_single_edge_task():
    b = table_bundle({1024: 500.0})
    outs, rep = run(wl([0.0]), b, PolicySpec.min_latency(0.0), [EDGE], GENERATIVE, seed=0)
    assert len(outs) == 1 and outs[0].config == EDGE
    assert rep.latency_prediction_error_pct == 0
    assert rep.total_actual_cost == 0 and rep.edge_execution_count == 1


def test_two_edge_tasks_one_ms_apart_queue():
    b = table_bundle({1024: 500.0}, edge_comp=1000.0)
    outs, _ = run(wl([0.0, 1.0]), b, PolicySpec.min_latency(0.0), [EDGE], GENERATIVE)
    assert outs[0].actual["queue_wait"] == 0
    assert outs[1].actual["queue_wait"] == pytest.approx(999.0)
    assert outs[1].actual_total_ms == pytest.approx(999 + 1000 + 25 + 583)
    assert outs[1].predicted.total_ms == pytest.approx(outs[1].actual_total_ms)


def test_container_lifetime_five_task_scenario():
    b = table_bundle({1024: 500.0}, edge_comp=1e6, t_idl_ms=10_000.0)
    times = [0.0, 3000.0, 5000.0, 30000.0, 33000.0]
    outs, rep = run(wl(times), b, PolicySpec.min_latency(1.0), [M1024, EDGE], GENERATIVE)
    assert [o.start_type_actual for o in outs] == [COLD, WARM, WARM, COLD, WARM]
    assert [o.predicted.start_type for o in outs] == [COLD, WARM, WARM, COLD, WARM]
    assert rep.warm_cold_mismatches == 0


def test_forced_divergence_mismatches_every_reuse():
    b = table_bundle({1024: 500.0}, edge_comp=1e6)
    times = [k * 5000.0 for k in range(6)]
    outs, rep = run(wl(times), b, PolicySpec.min_latency(1.0), [M1024, EDGE], GENERATIVE,
                    ground_truth_t_idl=NormalDist(0.0, 0.0), predictor_t_idl_ms=math.inf)
    assert all(o.start_type_actual == COLD for o in outs)
    reuses = sum(o.predicted.start_type == WARM for o in outs)
    assert reuses == 5 and rep.warm_cold_mismatches == reuses


def test_fd_expiry_straddle_gives_one_mismatch(fd_bundle, fd_test_trace):
    ids = sorted({r.input_id for r in fd_test_trace})[:5]
    full = load_workload(FIXTURES / "fd_test_workload.csv", arrivals=[0.0] * 200).sizes()
    sizes = [full[i] for i in ids]
    t_idl = fd_bundle.t_idl_ms
    times = [0.0, 5000.0, 10000.0, 10000.0 + t_idl + 30000.0, 15000.0 + t_idl + 30000.0]
    items = Workload([InputItem(i, s, t) for i, s, t in zip(ids, sizes, times)])
    outs, rep = run(items, fd_bundle, PolicySpec.min_latency(1.0), [M2048, EDGE], TRACE, seed=3,
                    trace=fd_test_trace, ground_truth_t_idl=NormalDist(t_idl, 0.0),
                    predictor_t_idl_ms=t_idl + 60000.0)
    assert all(o.config == M2048 for o in outs)
    assert [o.start_type_actual for o in outs] == [COLD, WARM, WARM, COLD, WARM]
    assert rep.warm_cold_mismatches == 1
    assert warm_cold_mismatches(outs) == 1


def test_edge_overload_grows_superlinearly():
    b = table_bundle({1024: 500.0}, edge_comp=1000.0)
    gap = 500.0  # arrivals at twice the edge service rate
    avg = {}
    for n in (20, 200):
        _, rep = run(wl([k * gap for k in range(n)]), b, PolicySpec.min_latency(0.0), [EDGE],
                     GENERATIVE)
        avg[n] = rep.avg_actual_latency_ms
    assert avg[200] > 5 * avg[20]


def test_conservation_budget_and_metric_definitions(fd_bundle, fd_test_trace):
    full = load_workload(FIXTURES / "fd_test_workload.csv",
                         arrivals=generate_arrivals(200, "poisson", 4, 1))
    policy = PolicySpec.min_latency(3e-6, 0.0)
    outs, rep = run(full, fd_bundle, policy, None, TRACE, seed=1, trace=fd_test_trace)
    assert rep.edge_execution_count + rep.cloud_execution_count == 200
    pred = math.fsum(o.predicted.cost_usd for o in outs)
    act = math.fsum(o.actual_cost_usd for o in outs)
    assert pred <= 200 * 3e-6
    assert rep.total_predicted_cost == pred and rep.total_actual_cost == act
    assert rep.cost_prediction_error_pct == pytest.approx(abs(act - pred) / act * 100)
    assert rep.pct_budget_used == pytest.approx(act / (3e-6 * 200) * 100)
    assert rep.pct_constraints_violated == pytest.approx(
        100 * sum(o.actual_cost_usd > o.allowance_usd for o in outs) / 200)
    assert rep.pct_deadlines_violated is None
    for o in outs:
        assert o.actual_cost_usd == cost(o.actual["comp"], o.config)
        parts = ("queue_wait", "comp", "iotup", "store") if o.config.is_edge else \
            ("upld", "start", "comp", "store")
        assert o.actual_total_ms == pytest.approx(sum(o.actual[k] for k in parts))


def test_deadline_metrics_average_only_violators(fd_bundle, fd_test_trace):
    full = load_workload(FIXTURES / "fd_test_workload.csv",
                         arrivals=generate_arrivals(200, "poisson", 4, 2))
    policy = PolicySpec.min_cost(2600)
    outs, rep = run(full, fd_bundle, policy, None, TRACE, seed=2, trace=fd_test_trace)
    late = [o.actual_total_ms - 2600 for o in outs if o.actual_total_ms > 2600]
    assert late
    assert rep.pct_deadlines_violated == pytest.approx(100 * len(late) / 200)
    assert rep.avg_violation_ms == pytest.approx(sum(late) / len(late))
    assert rep.pct_budget_used is None and rep.pct_constraints_violated is None


def test_runs_are_deterministic(fd_bundle, fd_test_trace):
    full = load_workload(FIXTURES / "fd_test_workload.csv",
                         arrivals=generate_arrivals(200, "poisson", 4, 9))
    a = run(full, fd_bundle, PolicySpec.min_latency(4e-6, 0.5), None, TRACE, 9, trace=fd_test_trace)
    b = run(full, fd_bundle, PolicySpec.min_latency(4e-6, 0.5), None, TRACE, 9, trace=fd_test_trace)
    assert outcomes_csv(a[0]) == outcomes_csv(b[0])
    assert a[1].to_json() == b[1].to_json()


def test_run_errors():
    b = table_bundle({1024: 500.0})
    with pytest.raises(ValueError):
        run(Workload([]), b, PolicySpec.min_latency(0.0))
    with pytest.raises(ValueError):
        run(wl([0.0]), b, PolicySpec.min_latency(0.0), mode="replay")
    with pytest.raises(ValueError):
        run(wl([0.0]), b, PolicySpec.min_latency(0.0), mode=TRACE)
    with pytest.raises(SimulationError):
        run(wl([0.0]), b, PolicySpec.min_latency(0.0), [M2048, EDGE])
    with pytest.raises(SimulationError):
        run(wl([0.0]), b, PolicySpec.min_latency(1.0), [M1024, EDGE], TRACE, trace=[])


def test_write_outputs(tmp_path):
    b = table_bundle({1024: 500.0})
    outs, rep = run(wl([0.0, 10.0]), b, PolicySpec.min_latency(1.0), None, GENERATIVE)
    csv_path, json_path = write_outputs(tmp_path / "o", outs, rep)
    lines = csv_path.read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("input_id,arrival_time_ms,config")
    assert json_path.read_text() == rep.to_json()
    assert not list((tmp_path / "o").glob("*.tmp"))


def test_ground_truth_pool_samples_idle_time_per_container():
    pool = GroundTruthPool(NormalDist(1000.0, 300.0), np.random.default_rng(0))
    for k in range(5):
        pool.acquire(M1024, 0.0, 10, 100, 50)
    lifetimes = {c.t_idl_ms for c in pool.containers[M1024]}
    assert len(lifetimes) == 5


def test_calibrate_noise_hits_targets(fd_bundle):
    sizes = np.linspace(2.5e5, 2.5e6, 40)
    noise = calibrate_noise(fd_bundle, sizes, 13.24, 3.78)
    cloud = [[fd_bundle.upload_ms(s), fd_bundle.warm_start.mean_ms,
              fd_bundle.cloud_compute_ms(s, c.memory_mb), fd_bundle.cloud_store.mean_ms]
             for c in fd_bundle.cloud_configs for s in sizes]
    edge = [[fd_bundle.edge_compute_ms(s), fd_bundle.iot_upload.mean_ms,
             fd_bundle.edge_store.mean_ms] for s in sizes]
    assert noise_floor_mape(cloud, noise.comp) == pytest.approx(13.24, rel=1e-6)
    assert noise_floor_mape(edge, noise.edge_comp) == pytest.approx(3.78, rel=1e-6)
    assert noise == NoiseSpec.from_dict({"cloud": noise.comp, "edge": noise.edge_comp})


# ---------------------------------------------------------------------------
# brute-force replay of a whole run

P = namedtuple("P", "config total_ms cost_usd start_type comp")


def replay_run(items, b, policy, configs, rows, cold, t_idl):
    """Recompute decisions and actual outcomes without the engine or the event loop."""
    cloud = [c for c in configs if not c.is_edge]
    cil = {c: [] for c in cloud}  # [busy, last, death]
    edge_pred_free = 0.0
    surplus = 0.0
    decided = []
    for it in items:
        now = it.arrival_time_ms
        upld = b.upload_ms(it.size)
        preds = []
        for c in cloud:
            comp = b.cloud_compute_ms(it.size, c.memory_mb)
            warm = any(r[0] <= now + upld < r[2] for r in cil[c])
            start = b.warm_start.mean_ms if warm else b.cold_start.mean_ms
            preds.append(P(c, upld + start + comp + b.cloud_store.mean_ms, cost(comp, c),
                           WARM if warm else COLD, comp))
        ecomp = b.edge_compute_ms(it.size)
        wait = max(0.0, edge_pred_free - now)
        preds.append(P(EDGE, wait + ecomp + b.iot_upload.mean_ms + b.edge_store.mean_ms, 0.0,
                       "n/a-edge", ecomp))
        if policy.kind == "min_latency":
            p = scan_min_latency(preds, surplus, policy.budget_usd, policy.alpha)
            surplus = surplus + policy.budget_usd - p.cost_usd
        else:
            p = scan_min_cost(preds, policy.deadline_ms)
        if p.config.is_edge:
            edge_pred_free = max(now, edge_pred_free) + p.comp
        else:
            trigger = now + upld
            start = b.warm_start.mean_ms if p.start_type == WARM else b.cold_start.mean_ms
            done = trigger + start + p.comp
            if p.start_type == WARM:
                r = max((r for r in cil[p.config] if r[0] <= trigger < r[2]), key=lambda r: r[1])
            else:
                r = [0, 0, 0]
                cil[p.config].append(r)
            r[0] = r[1] = done
            r[2] = done + t_idl
        decided.append(p)

    totals, kinds = [None] * len(items), [None] * len(items)
    edge_free = 0.0
    for k, (it, p) in enumerate(zip(items, decided)):
        if p.config.is_edge:
            row = rows[(it.id, EDGE)]
            start = max(it.arrival_time_ms, edge_free)
            edge_free = start + row.comp_ms
            totals[k] = (start - it.arrival_time_ms) + row.comp_ms + (row.iotup_ms or 0.0) + row.store_ms
            kinds[k] = "n/a-edge"
    pool = {}
    cloud_tasks = sorted((it.arrival_time_ms + rows[(it.id, p.config)].upld_ms, k)
                         for k, (it, p) in enumerate(zip(items, decided)) if not p.config.is_edge)
    for trigger, k in cloud_tasks:
        it, p = items[k], decided[k]
        row = rows[(it.id, p.config)]
        idle = [c for c in pool.get(p.config, []) if c[0] <= trigger < c[2]]
        if idle:
            c = max(idle, key=lambda c: c[1])
            start, kinds[k] = row.start_ms, WARM
        else:
            c = [0, 0, 0]
            pool.setdefault(p.config, []).append(c)
            start, kinds[k] = cold, COLD
        c[0] = c[1] = trigger + start + row.comp_ms
        c[2] = c[0] + t_idl
        totals[k] = row.upld_ms + start + row.comp_ms + row.store_ms
    return decided, kinds, totals


MEMS = [640, 1024, 2048]


@st.composite
def scenarios(draw):
    n = draw(st.integers(1, 10))
    gaps = draw(st.lists(st.sampled_from([0.0, 1.0, 300.0, 900.0, 2500.0, 9000.0]),
                         min_size=n, max_size=n))
    times = np.cumsum(gaps).tolist()
    sizes = draw(st.lists(st.integers(1, 20).map(lambda s: s * 1e5), min_size=n, max_size=n))
    mems = draw(st.lists(st.sampled_from(MEMS), min_size=1, max_size=3, unique=True))
    comps = {m: draw(st.integers(2, 30)) * 50.0 for m in MEMS}
    vals = st.integers(1, 40).map(lambda v: v * 25.0)
    rows = {}
    for k in range(n):
        iid = f"t{k}"
        for m in MEMS:
            rows[(iid, ContainerConfig.cloud(m))] = TraceRow(
                iid, ContainerConfig.cloud(m), comp_ms=draw(vals), store_ms=draw(vals),
                upld_ms=draw(vals), start_ms=draw(vals), start_type=WARM)
        rows[(iid, EDGE)] = TraceRow(iid, EDGE, comp_ms=draw(vals) * 4, store_ms=draw(vals),
                                     iotup_ms=draw(st.one_of(st.none(), vals)))
    if draw(st.booleans()):
        policy = PolicySpec.min_latency(draw(st.integers(0, 12)) * 1e-6,
                                        draw(st.sampled_from([0.0, 0.3, 1.0])))
    else:
        policy = PolicySpec.min_cost(draw(st.integers(10, 60)) * 100.0)
    t_idl = draw(st.sampled_from([200.0, 3000.0, 1e6]))
    return times, sizes, mems, comps, rows, policy, t_idl


@given(scenarios())
@settings(max_examples=200, deadline=None)
def test_full_run_matches_brute_force_replay(sc):
    times, sizes, mems, comps, rows, policy, t_idl = sc
    b = table_bundle(comps, upld=150.0, upld_slope=1e-4, edge_comp=400.0, edge_slope=1e-3,
                     t_idl_ms=t_idl)
    configs = [ContainerConfig.cloud(m) for m in sorted(mems)] + [EDGE]
    items = wl(times, sizes)
    outs, _ = run(items, b, policy, configs, TRACE, seed=0, trace=list(rows.values()))
    decided, kinds, totals = replay_run(list(items), b, policy, configs, rows, 1500.0, t_idl)
    assert [o.config for o in outs] == [p.config for p in decided]
    assert [o.predicted.start_type for o in outs] == [p.start_type for p in decided]
    assert [o.predicted.total_ms for o in outs] == pytest.approx([p.total_ms for p in decided])
    assert [o.start_type_actual for o in outs] == kinds
    assert [o.actual_total_ms for o in outs] == pytest.approx(totals)
