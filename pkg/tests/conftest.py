import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rrgen.sysid import InnovationModel

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def first_order():
    """SISO predictor Phi=0.5, B~=1, K=0.3, C=1, D=0."""
    return InnovationModel.from_predictor(0.5, 1.0, 0.3, 1.0, 0.0, 1.0)


@pytest.fixture
def mimo_fir():
    """Two-input two-output plant with Phi = 0, so p = 1 truncation is exact."""
    k = np.array([[0.4, 0.1], [-0.2, 0.3]])
    c = np.eye(2)
    b_tilde = np.array([[1.0, 0.5], [0.0, -0.7]])
    d = np.array([[0.3, 0.0], [0.1, 0.2]])
    sigma_e = np.array([[1.0, 0.3], [0.3, 0.5]])
    return InnovationModel.from_predictor(np.zeros((2, 2)), b_tilde, k, c, d, sigma_e)


def spd(rng, n):
    a = rng.standard_normal((n, n))
    return a.T @ a + np.eye(n)


# One line per acceptance criterion, filled in by test_acceptance.py and
# repeated at the end of the pytest run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
