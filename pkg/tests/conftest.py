import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from butterfly_fwm import (  # noqa: E402
    ButterflyParams,
    IntegratorControl,
    SystemState,
    build_mode_grid,
    integrate,
    steady_state,
)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


FIG2 = dict(omega_d=0.1, omega_c=100.0, atom_number=1e6, radius=50.0, wavelength=1.0)


@pytest.fixture(scope="session")
def fig2_params():
    return ButterflyParams(**FIG2)


@pytest.fixture(scope="session")
def fig2_grid():
    return build_mode_grid(50.0, 1.0, 200)


@pytest.fixture(scope="session")
def fig2_steady(fig2_params, fig2_grid):
    return steady_state(fig2_params, fig2_grid)


@pytest.fixture(scope="session")
def small_model():
    """A cheap configuration for property tests: 12 rings, modest coupler."""
    params = ButterflyParams(omega_d=0.2, omega_c=5.0, atom_number=2e4, radius=10.0, wavelength=1.0)
    return params, build_mode_grid(10.0, 1.0, 12)


@pytest.fixture(scope="session")
def small_trajectory(small_model):
    params, grid = small_model
    ctrl = IntegratorControl(samples=201)
    return integrate(SystemState.ground(params.atom_number, grid.ring_count), params, grid, 4.0, ctrl)
