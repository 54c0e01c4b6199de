import numpy as np
import pytest

from fracschro.spectral import build_region, build_torus_spectrum

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def circle():
    """2*pi circle, K = 41 modes on 64 points."""
    return build_torus_spectrum(1, 2 * np.pi, 20, 64)


@pytest.fixture(scope="session")
def small_circle():
    return build_torus_spectrum(1, 2 * np.pi, 6, 16)


@pytest.fixture(scope="session")
def torus2d():
    return build_torus_spectrum(2, [2 * np.pi, 2 * np.pi], 3, 8)


@pytest.fixture(scope="session")
def half_circle(circle):
    return build_region(circle, lambda x: 0 < x[0] < np.pi, "half")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
