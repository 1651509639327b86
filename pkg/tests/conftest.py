import json

import pytest

from placesim.models import PerfModelBundle, TrainOptions, train_bundle
from placesim.workload import load_trace, load_workload

from support import CONFIGS, FIXTURES


@pytest.fixture(scope="session")
def fd_train_trace():
    return load_trace(FIXTURES / "fd_train_trace.csv")


@pytest.fixture(scope="session")
def fd_train_sizes():
    wl = load_workload(FIXTURES / "fd_train_workload.csv", arrivals=[0.0] * 300)
    return wl.sizes()


@pytest.fixture(scope="session")
def fd_bundle(fd_train_trace, fd_train_sizes, tmp_path_factory) -> PerfModelBundle:
    """Bundle trained on the FD fixture with the bundled training options."""
    cfg = json.loads((CONFIGS / "fd_train.json").read_text())
    opts = dict(cfg.get("training", {}), seed=cfg["seed"], app_label=cfg["app_label"])
    bundle = train_bundle(fd_train_trace, fd_train_sizes, TrainOptions.from_dict(opts))
    # round trip through JSON so tests see exactly what the CLI would load
    path = tmp_path_factory.mktemp("model") / "model.json"
    bundle.save(path)
    return PerfModelBundle.load(path)


@pytest.fixture(scope="session")
def fd_test_trace():
    return load_trace(FIXTURES / "fd_test_trace.csv")


@pytest.fixture(scope="session")
def cli_model(tmp_path_factory):
    """model.json produced by ``placesim train`` on the bundled training config."""
    from placesim.cli import main

    out = tmp_path_factory.mktemp("fd_model")
    assert main(["train", "--config", str(CONFIGS / "fd_train.json"), "--out", str(out)]) == 0
    return out / "model.json"


def pytest_terminal_summary(terminalreporter):
    from support import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
