import numpy as np
import pytest

from jetstab.linear import DispersionParams
from jetstab.spectral import FourierGrid, Spectrum, fft


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def p051():
    return DispersionParams(0.51)


def random_spectrum(grid: FourierGrid, rng, decay: float = 0.0) -> Spectrum:
    """Hermitian random spectrum on the retained modes, optionally damped like |xi|^-decay."""
    c = fft(rng.standard_normal(grid.n_modes))
    c = c / (1.0 + np.abs(grid.xi)) ** decay
    return Spectrum(grid, np.where(grid.retained, c, 0.0))


# one summary line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
