import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from henonmix.map_core import from_factors, standard_map

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SQRT11 = np.sqrt(11.0)
FIXED_PLUS = (1 + SQRT11, 1 + SQRT11)
FIXED_MINUS = (1 - SQRT11, 1 - SQRT11)


@pytest.fixture(scope="session")
def std():
    return standard_map()


@pytest.fixture(scope="session")
def two_factor():
    return from_factors([((-10, 0, 1), 1), ((-2, "1/3", 1), "1/2")])


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def random_box_points(rng, n, half=6.0):
    v = rng.uniform(-half, half, size=(n, 4))
    return np.stack([v[:, 0] + 1j * v[:, 1], v[:, 2] + 1j * v[:, 3]], axis=1)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
