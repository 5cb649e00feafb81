import math

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

from nevlab.dynamics import find_mixed_instance
from nevlab.functions import ClosedFormTwoAV, OdeBacked
from nevlab.schwarzian import SchwarzPolynomial


@pytest.fixture(scope="session")
def toy():
    return ClosedFormTwoAV(2, 1)


@pytest.fixture(scope="session")
def toy_k2():
    return ClosedFormTwoAV(1j * math.pi, -1j * math.pi)


@pytest.fixture(scope="session")
def mixed():
    return find_mixed_instance()


@pytest.fixture(scope="session")
def ode_z():
    """P = z with the principal pair of sector 0."""
    return OdeBacked(SchwarzPolynomial.of(0, 1), 2, 0.5, 1, 1)


@pytest.fixture(scope="session")
def ode_one():
    return OdeBacked(SchwarzPolynomial.of(1), 2, 0.5, 1, 1, r_max=70)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ode_z_poles(ode_z):
    from nevlab.roots import AnnularSector, poles_in_region
    return poles_in_region(ode_z, AnnularSector(0.5, 40, 0.0, 0.5))


@pytest.fixture(scope="session")
def ode_z_preimages(ode_z):
    from nevlab.roots import AnnularSector, preimages_in_region
    return preimages_in_region(ode_z, 1, AnnularSector(0.5, 40, 0.0, 0.5))


_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance_lines():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
