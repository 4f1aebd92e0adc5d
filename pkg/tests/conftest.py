import numpy as np
import pytest

from risemi.config import SystemConfig

# Lines recorded by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def reference_config():
    return SystemConfig()


@pytest.fixture(scope="session")
def small_config():
    """Cheap scenario for unit tests: 4x4 RIS, 4 antennas, 2 UEs."""
    return SystemConfig(n_t=4, m_h=4, m_v=4, k_ue=2, tau_p=2, tau_u=2,
                        ue_pos=((50.0, 0.0, 1.7), (50.5, 0.0, 1.7)))
