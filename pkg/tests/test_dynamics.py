import math

import numpy as np
import pytest

from wgm_upconvert.constants import Frequency, wavelength_to_omega
from wgm_upconvert.conversion import photon_efficiency, xi_factor
from wgm_upconvert.dynamics import (
    ModeAmplitudes,
    StepFailure,
    invariants,
    kappa_from_q,
    rhs,
    simulate,
    smallsignal_efficiency,
    steady_state,
)


def test_invariants_conserved_lossless():
    s = ModeAmplitudes(a=1.0, c=0.3)
    g = 1.0
    ts = simulate(s, g, duration=2 * math.pi * 500, tolerance=1e-12)
    assert ts.invariant_drift() < 1e-8
    n_opt, n_c = invariants(ts.y)
    assert n_opt[0] == pytest.approx(1.0)
    assert n_c[0] == pytest.approx(0.09)
    # energy actually flows between modes
    assert np.abs(ts.y[:, 1]).max() > 0.05


def test_rhs_matches_hamiltonian_flow():
    s = ModeAmplitudes(a=0.7 + 0.2j, b_plus=0.1j, b_minus=0.05, c=0.3 - 0.1j)
    d = rhs(s, 2.0)
    # d/dt of the conserved sums is zero for any lossless state
    v = s.vector
    n1 = 2 * np.real(np.conj(v[:3]) @ d[:3])
    n2 = 2 * np.real(np.conj(v[3]) * d[3] + np.conj(v[1]) * d[1] - np.conj(v[2]) * d[2])
    assert abs(n1) < 1e-14
    assert abs(n2) < 1e-14


def test_single_sideband_coupling():
    s = ModeAmplitudes(a=1.0, c=0.3)
    d = rhs(s, 1.0, sidebands="anti-Stokes")
    assert d[2] == 0  # b_minus untouched
    assert d[1] != 0
    with pytest.raises(ValueError):
        rhs(s, 1.0, sidebands="sum")


def test_steady_state_driven_uncoupled():
    s = ModeAmplitudes(kappa_a=2.0, kappa_b=2.0, kappa_c=0.5, drive_a=4.0, drive_c=1.0)
    ss = steady_state(s, 0.0)
    assert ss.a == pytest.approx(2.0)
    assert ss.c == pytest.approx(2.0)
    assert ss.b_plus == 0


def test_smallsignal_matches_closed_form():
    w0 = wavelength_to_omega(1550e-9)
    wc = Frequency.from_ghz(100).value
    g, Q, QM, P0 = 30.0, 1e8, 100.0, 0.01
    xi = xi_factor(g, Q, QM, w0, wc)
    P_M = 1e-4 / (2 * xi**2)
    eta = smallsignal_efficiency(g, Q, QM, w0, wc, P0, P_M)
    ref = photon_efficiency(xi, P0, w0, wc)
    assert eta == pytest.approx(ref, rel=1e-3)


def test_single_sideband_loading_vanishes_at_low_pump():
    # without the Stokes branch the optical mode loads the microwave mode;
    # the relative shortfall is about half the efficiency
    w0 = wavelength_to_omega(1550e-9)
    wc = Frequency.from_ghz(100).value
    g, Q, QM = 30.0, 1e8, 100.0
    xi = xi_factor(g, Q, QM, w0, wc)
    gaps = []
    for P0 in (1e-2, 1e-3):
        ref = photon_efficiency(xi, P0, w0, wc)
        got = smallsignal_efficiency(g, Q, QM, w0, wc, P0, 1e-12, sidebands="anti-Stokes")
        gaps.append(1 - got / ref)
        assert gaps[-1] == pytest.approx(ref / 2, rel=0.1)
    assert gaps[1] < gaps[0] / 5


def test_port_fraction_scaling():
    w0 = wavelength_to_omega(1550e-9)
    wc = Frequency.from_ghz(100).value
    args = (30.0, 1e8, 100.0, w0, wc, 0.01, 1e-12)
    full = smallsignal_efficiency(*args)
    half = smallsignal_efficiency(*args, x_opt=0.5, x_mw=0.5)
    assert half == pytest.approx(full * 0.5**3, rel=1e-6)
    with pytest.raises(ValueError):
        smallsignal_efficiency(*args, x_opt=0.0)


def test_validation():
    with pytest.raises(ValueError):
        ModeAmplitudes(kappa_a=-1)
    with pytest.raises(ValueError):
        ModeAmplitudes(a=complex(float("nan"), 0))
    with pytest.raises(ValueError):
        simulate(ModeAmplitudes(a=1), 1.0, duration=0)
    with pytest.raises(ValueError):
        simulate(ModeAmplitudes(a=1), 1.0, duration=1, method="rk4")
    with pytest.raises(ValueError):
        steady_state(ModeAmplitudes(a=1), 1.0)
    assert kappa_from_q(2e9, 100) == pytest.approx(1e7)


def test_time_series_csv(tmp_path):
    ts = simulate(ModeAmplitudes(a=1.0, c=0.3), 1.0, duration=1.0, samples=5)
    text = ts.to_csv(tmp_path / "d.csv")
    lines = text.splitlines()
    assert lines[0].startswith("t_s,a_re,a_im")
    assert len(lines) == 6
    assert StepFailure.__mro__[1] is RuntimeError
