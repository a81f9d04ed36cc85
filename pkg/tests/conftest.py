import numpy as np
import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    """Criterion pass/fail lines, one per acceptance test, capture-proof."""
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from vplangevin.decompose import FluctuationSeries
from vplangevin.sde import SimConfig, simulate
from vplangevin.surfaces import REFERENCE_SURFACES


@pytest.fixture(scope="session")
def reference_path_200k():
    """One medium reference-surface path reused by estimation tests."""
    return simulate(REFERENCE_SURFACES, SimConfig(n_steps=200_000, dt=0.1, seed=42))


@pytest.fixture(scope="session")
def reference_fluctuations_200k(reference_path_200k):
    return reference_path_200k.to_fluctuations()


def make_fluctuations(phi, theta, slots_per_day=0, window_index=None):
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if window_index is None:
        window_index = np.arange(len(phi), dtype=np.int64)
    return FluctuationSeries(window_index=np.asarray(window_index, dtype=np.int64),
                             phi_f=phi, theta_f=theta, slots_per_day=slots_per_day)
