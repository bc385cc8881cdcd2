import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from modesub.modes import DEFAULT_INPUT_GRID, make_band_basis, make_hg_basis

settings.register_profile(
    "modesub", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("modesub")


def random_unit(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_chi(rng, d, rank=None):
    rank = rank or d
    A = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = A @ A.conj().T
    return m / np.trace(m).real


@pytest.fixture(scope="session")
def hg7():
    return make_hg_basis(7, 795.0, 4.0, DEFAULT_INPUT_GRID)


@pytest.fixture(scope="session")
def bands25():
    return make_band_basis(25, 786.0, 804.0, DEFAULT_INPUT_GRID)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
