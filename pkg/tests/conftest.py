import numpy as np
import pytest

from wgm_upconvert.constants import Frequency
from wgm_upconvert.fem import fundamental_mode
from wgm_upconvert.geometry import cross_section_profile, generate_mesh, reference_geometry

LN_INDICES = {"ring": 5.15, "post": 1.9}


@pytest.fixture(scope="session")
def ln_geometry():
    return reference_geometry(rho=np.inf)


@pytest.fixture(scope="session")
def ln_coarse_mesh(ln_geometry):
    profile = cross_section_profile(ln_geometry, target_frequency_hz=100e9)
    return generate_mesh(profile, 100e-6)


@pytest.fixture(scope="session")
def ln_coarse_mode(ln_coarse_mesh):
    """In-plane family fundamental at L_c = 13 on the coarse mesh."""
    sol = fundamental_mode(ln_coarse_mesh, LN_INDICES, 13, Frequency.from_ghz(95), family="r")
    assert sol is not None
    return sol


# acceptance verdicts, one line per criterion, echoed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
