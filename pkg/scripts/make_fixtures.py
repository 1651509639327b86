#!/usr/bin/env python3
"""Regenerate the bundled CSV fixtures under fixtures/ (deterministic)."""

import argparse
from pathlib import Path

from placesim.containers import ContainerConfig
from placesim.synth import FD_PROFILE, profile_trace
from placesim.workload import TraceRow, generate_arrivals, make_workload, write_trace, write_workload


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "fixtures"))
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows, sizes = profile_trace(FD_PROFILE, 300, n_cold_inputs=20, seed=1, id_prefix="fdtr")
    write_trace(out / "fd_train_trace.csv", rows)
    write_workload(out / "fd_train_workload.csv",
                   make_workload(list(sizes.values()), [0.0] * len(sizes), list(sizes)),
                   with_arrivals=False)

    rows, sizes = profile_trace(FD_PROFILE, 200, seed=2, id_prefix="fdte")
    write_trace(out / "fd_test_trace.csv", rows)
    write_workload(out / "fd_test_workload.csv",
                   make_workload(list(sizes.values()), [0.0] * len(sizes), list(sizes)),
                   with_arrivals=False)

    # Poisson arrivals at twice the mean edge service rate of the test inputs.
    mean_edge = sum(float(FD_PROFILE.edge_compute(s)) for s in sizes.values()) / len(sizes)
    rate = 2.0 * 1000.0 / mean_edge
    arrivals = generate_arrivals(len(sizes), "poisson", rate, seed=5)
    write_workload(out / "fd_overload_workload.csv",
                   make_workload(list(sizes.values()), arrivals, list(sizes)))

    configs = [ContainerConfig.cloud(m) for m in (640, 1024, 1536, 2048)]
    small, _ = profile_trace(FD_PROFILE, 4, configs=configs, n_cold_inputs=0, seed=3, id_prefix="s")
    # One edge row without iotup, as for apps that store straight from the device.
    last = small[-1]
    small[-1] = TraceRow(last.input_id, last.config, comp_ms=last.comp_ms,
                         store_ms=last.store_ms, start_type=last.start_type)
    write_trace(out / "trace20.csv", small)
    print(f"wrote fixtures to {out} (overload rate {rate:.4f}/s)")


if __name__ == "__main__":
    main()
