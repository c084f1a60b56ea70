import math
from dataclasses import replace

import numpy as np
import pytest

from wgm_upconvert.constants import Frequency, wavelength_to_omega
from wgm_upconvert.conversion import (
    DegenerateCoupling,
    OverlapResult,
    coupling_g,
    efficiency_budget,
    manley_rowe_photon_eff,
    overlap_factor,
    photon_efficiency,
    required_pump,
    sideband_ratio,
    xi_factor,
)

W0 = 1.2e15
WC = Frequency.from_ghz(100).value


def test_sideband_ratio_peak_and_small_signal():
    xi = 3.0
    P_peak = 1 / (2 * xi**2)
    assert sideband_ratio(xi, P_peak) == pytest.approx(0.5, abs=1e-15)
    P = np.linspace(0, 10 * P_peak, 2001)
    assert max(sideband_ratio(xi, p) for p in P) <= 0.5 + 1e-15
    P_small = 1e-4 / (2 * xi**2)
    assert sideband_ratio(xi, P_small) == pytest.approx(4 * xi**2 * P_small, rel=0.01)
    assert sideband_ratio(xi, 0.0) == 0.0


def test_xi_scaling():
    x = xi_factor(100.0, 1e8, 100, W0, WC)
    assert xi_factor(100.0, 2e8, 100, W0, WC) == pytest.approx(2 * x)
    assert xi_factor(100.0, 1e8, 200, W0, WC) == pytest.approx(math.sqrt(2) * x)
    assert xi_factor(0.0, 1e8, 100, W0, WC) == 0.0
    with pytest.raises(ValueError):
        xi_factor(1.0, 1e8, 0, W0, WC)


def test_efficiency_and_pump_are_inverse():
    xi = 12.0
    for eta in (1.0, 0.5, 1e-3):
        P = required_pump(xi, W0, WC, eta)
        assert photon_efficiency(xi, P, W0, WC) == pytest.approx(eta, rel=1e-12)
    assert required_pump(xi, W0, WC, 0.5) == pytest.approx(0.5 * required_pump(xi, W0, WC, 1.0))
    assert photon_efficiency(xi, 0.0, W0, WC) == 0.0
    with pytest.raises(DegenerateCoupling):
        required_pump(0.0, W0, WC)
    with pytest.raises(ValueError):
        required_pump(xi, W0, WC, 1.5)


def test_linearity_in_pump():
    xi = 7.0
    vals = [photon_efficiency(xi, p, W0, WC) * W0 / (WC * p) for p in (1e-3, 1e-2, 3e-2)]
    assert np.ptp(vals) < 1e-12 * max(vals)


def test_manley_rowe():
    wp = wavelength_to_omega(1560e-9)
    eta = manley_rowe_photon_eff(0.005, wp, Frequency.from_ghz(101.12).value)
    assert eta == pytest.approx(2.6e-6, rel=0.05)
    assert manley_rowe_photon_eff(0.0, wp, WC) == 0.0
    assert manley_rowe_photon_eff(0.3, WC, WC) == 0.3


def test_coupling_scaling():
    base = coupling_g(29.0, 2.138, 2.138, 5.15, W0, WC, (0.5, 1e-9))
    assert coupling_g(58.0, 2.138, 2.138, 5.15, W0, WC, (0.5, 1e-9)) == pytest.approx(2 * base)
    assert coupling_g(29.0, 2.138, 2.138, 5.15, W0, WC, (0.25, 1e-9)) == pytest.approx(base / 2)
    assert coupling_g(29.0, 2.138, 2.138, 5.15, W0, WC, (0.0, 1e-9)) == 0.0
    with pytest.raises(ValueError):
        OverlapResult(0.5, 0.0, 1e-9, 0.5)


def test_overlap_of_coarse_mode(ln_coarse_mode):
    ov = overlap_factor(ln_coarse_mode, conversion_type="II")
    assert 0.05 < ov.effective_field <= 1
    assert ov.component == "r"
    z = overlap_factor(ln_coarse_mode, conversion_type="I")
    assert z.effective_field < 1e-6  # E_z vanishes on the equator for this family
    patch = overlap_factor(ln_coarse_mode, conversion_type="II", patch=(10e-6, 10e-6))
    assert patch.effective_field == pytest.approx(ov.effective_field, rel=0.2)


def test_coupling_independent_of_field_scale(ln_coarse_mode):
    # overlap grows linearly with the raw amplitude, V_c quadratically
    k = 7.3
    s2 = replace(
        ln_coarse_mode,
        field=ln_coarse_mode.field * k,
        corner_field=ln_coarse_mode.corner_field * k,
        quad_field=ln_coarse_mode.quad_field * k,
    )
    b1 = efficiency_budget(ln_coarse_mode, "lithium-niobate", "II")
    b2 = efficiency_budget(s2, "lithium-niobate", "II")
    assert b1.g > 0
    assert b2.overlap.effective_field == pytest.approx(k * b1.overlap.effective_field)
    assert b2.g == pytest.approx(b1.g, rel=1e-9)


def test_budget_report(ln_coarse_mode):
    b = efficiency_budget(ln_coarse_mode, "lithium-niobate", "II", P0=0.01)
    rep = b.report().splitlines()
    assert rep[0] == "quantity,value"
    keys = [line.split(",")[0] for line in rep[1:]]
    for k in ("effective_field", "V_c_m3", "g_rad_per_s", "xi_per_sqrtW", "eta_photon", "P0_unity_W"):
        assert k in keys
    assert b.eta_photon == pytest.approx(photon_efficiency(b.xi, 0.01, b.omega_0, b.omega_c))
    with pytest.raises(ValueError):
        efficiency_budget(ln_coarse_mode, "lithium-niobate", "I", Q_M=0)
