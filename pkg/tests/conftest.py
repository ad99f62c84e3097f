import numpy as np
import pytest

from secindex import build_blocks, build_platoon, generate_excitation
from secindex.data_index import DataIndex
from secindex.linsys import ComponentLayout, LtiSystem, PlatoonConfig, simulate

# lines recorded by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def platoon5():
    cfg = PlatoonConfig()
    sys, layout = build_platoon(cfg)
    traj = generate_excitation(sys, cfg, 10)
    blocks = build_blocks(traj, 10, layout)
    return sys, layout, traj, blocks


@pytest.fixture(scope="session")
def platoon5_engine(platoon5):
    return DataIndex(platoon5[3])


def scalar_plant(nu=0):
    sys = LtiSystem(np.array([[0.5]]), np.array([[1.0]]), np.array([[1.0]]))
    return sys, ComponentLayout(1, 1, nu)


def scalar_data(nu=0, N=40, L=1, seed=0):
    sys, lay = scalar_plant(nu)
    rng = np.random.default_rng(seed)
    traj = simulate(sys, rng.standard_normal(1), rng.standard_normal((N, 1)))
    return sys, lay, traj, build_blocks(traj, L, lay)
