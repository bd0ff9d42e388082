import numpy as np
import pytest

from kflow.flow import FlowConfig, run
from kflow.pipeline import analyze
from kflow.scenarios import scenario

# criterion verdicts collected by test_acceptance and echoed in the terminal summary
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def sphere_run():
    sc = scenario("round_sphere", 3)
    traj = run(sc.mesh, FlowConfig(stop_factor=100.0))
    return sc, traj, analyze(traj)


@pytest.fixture(scope="session")
def torus_run():
    sc = scenario("clifford_torus", 32)
    traj = run(sc.mesh, FlowConfig(stop_factor=100.0))
    return sc, traj, analyze(traj)


@pytest.fixture(scope="session")
def perturbed_runs():
    out = []
    for seed in range(5):
        sc = scenario("symplectic_perturbed_graph", 32, seed=seed)
        out.append((sc, run(sc.mesh, FlowConfig(t_end=0.2, snapshot_stride=5))))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
