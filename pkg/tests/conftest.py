import numpy as np
import pytest
from hypothesis import settings

from freepoly.spectra import ScalarMeasure

settings.register_profile("freepoly", deadline=None, max_examples=40)
settings.load_profile("freepoly")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def semicircle():
    return ScalarMeasure.semicircle(0.0, 2.0)


@pytest.fixture(scope="session")
def bernoulli():
    return ScalarMeasure.atomic([-1.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hermitian(rng, n, scale=1.0):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (A + A.conj().T) / 2


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
