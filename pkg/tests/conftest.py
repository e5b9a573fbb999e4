import numpy as np
import pytest

from quadnls import spectral_core as sc
from quadnls.functionals import PhysicalParams


@pytest.fixture(scope="session")
def half():
    return PhysicalParams(0.5)


@pytest.fixture(scope="session")
def rg4():
    return sc.RadialGrid(4, 2048, 20.0)


@pytest.fixture(scope="session")
def ground4(half):
    """omega = 1 resonant ground state, spectrally polished (R = 40, nr = 512)."""
    from quadnls.blowup import spectral_ground_state
    return spectral_ground_state()


@pytest.fixture(scope="session")
def gn8192(half):
    from quadnls.ground_state import gn_constant
    return gn_constant(sc.RadialGrid(4, 8192, 20.0), half)


def gaussian(g, width=1.0):
    q = g.r ** 2 if isinstance(g, sc.RadialGrid) else g.rsq
    return np.exp(-q / (2 * width ** 2))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance")
        for line in VERDICTS:
            terminalreporter.write_line(line)
