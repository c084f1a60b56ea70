import math

import numpy as np
import pytest

from wgm_upconvert.constants import C_LIGHT, Frequency
from wgm_upconvert.fem import DispersionTable
from wgm_upconvert.geometry import reference_geometry
from wgm_upconvert.phasematch import (
    ANTI_STOKES,
    STOKES,
    TYPE_I,
    TYPE_II,
    DegenerateTuning,
    PhaseMatchLine,
    bias_for_match,
    envelope_matches,
    find_matches,
    optical_eigenfrequency,
    optical_fsr,
    phasematch_line,
    selection_rule_check,
)

TWO_PI = 2 * math.pi


def test_optical_mode_number_near_pump():
    R, n = 2.9e-3, 2.138
    L_a = round(1.2e15 * R * n / C_LIGHT)
    assert L_a == 24818
    assert abs(optical_eigenfrequency(L_a, R, n).value - 1.2e15) < optical_fsr(R, n)
    assert optical_fsr(R, n) / TWO_PI / 1e9 == pytest.approx(7.70, abs=0.01)


def test_type_one_line_at_thirteen():
    f = phasematch_line(13, 2.9e-3, 2.138, 2.138, 1.2e15, ANTI_STOKES)
    assert f.ghz == pytest.approx(100.1, abs=0.5)
    # branches coincide when n_a = n_b
    assert phasematch_line(13, 2.9e-3, 2.138, 2.138, 1.2e15, STOKES).value == f.value


def test_type_two_lithium_tantalate_offset_and_bias_slope():
    g = reference_geometry(R_in=2.61e-3, ring_material="lithium-tantalate")
    line = PhaseMatchLine.type_two(g, branch=STOKES)
    assert line.offset / TWO_PI / 1e12 == pytest.approx(-0.366, abs=0.005)
    assert line.with_branch(ANTI_STOKES).offset == pytest.approx(-line.offset)
    # -omega_0 n^2 (r33 - r31) / (2 h) for n = 2.12, h = 292 um
    assert line.bias_sensitivity / TWO_PI / 1e6 == pytest.approx(-32.8, abs=1.0)


def test_lithium_niobate_offset():
    line = PhaseMatchLine.type_two(reference_geometry(), pump_polarization="ordinary", branch=ANTI_STOKES)
    assert abs(line.offset) / TWO_PI / 1e12 == pytest.approx(6.6, abs=0.1)


def test_line_slope_is_fsr():
    line = PhaseMatchLine.type_two(reference_geometry(R_in=2.61e-3, ring_material="lithium-tantalate"))
    for U in (0.0, 50.0):
        assert line.omega(41, U) - line.omega(40, U) == pytest.approx(line.Omega_b, rel=1e-12)


def test_bias_inversion():
    line = PhaseMatchLine.type_two(reference_geometry(R_in=2.61e-3, ring_material="lithium-tantalate"))
    target = line.omega(77, 0.0) + TWO_PI * 1e9
    U = bias_for_match(77, target, line)
    assert U == pytest.approx(TWO_PI * 1e9 / line.bias_sensitivity)
    assert abs(line.omega(77, U) / target - 1) < 1e-9
    assert bias_for_match(77, line.omega(77, 0.0), line) == 0.0
    with pytest.raises(DegenerateTuning):
        bias_for_match(13, 1e11, PhaseMatchLine.type_one(reference_geometry()))


def _table_on_line(line, Ls):
    return DispersionTable.from_arrays(Ls, [line.omega(L) / TWO_PI / 1e9 for L in Ls])


def test_find_matches_identity_and_zero_tolerance():
    line = PhaseMatchLine.type_one(reference_geometry())
    Ls = np.arange(5, 20)
    assert [m.L_c for m in sorted(find_matches(_table_on_line(line, Ls), line), key=lambda m: m.L_c)] == list(Ls)
    shifted = DispersionTable.from_arrays(Ls, [line.omega(L) / TWO_PI / 1e9 + 0.3 for L in Ls])
    assert find_matches(shifted, line, tolerance=0.0) == []


def test_find_matches_tolerance_monotone():
    line = PhaseMatchLine.type_one(reference_geometry())
    Ls = np.arange(8, 18)
    table = DispersionTable.from_arrays(Ls, 90 + 2.1 * (Ls - 8))
    prev = set()
    for tol_ghz in (0.01, 0.3, 1.0, 3.0, 30.0):
        found = {m.L_c for m in find_matches(table, line, tolerance=TWO_PI * tol_ghz * 1e9)}
        assert prev <= found
        prev = found


def test_default_tolerance_is_the_narrower_linewidth():
    line = PhaseMatchLine.type_one(reference_geometry())
    f13 = line.omega(13) / TWO_PI / 1e9
    table = DispersionTable.from_arrays([13], [f13 + 0.01])  # 10 MHz off
    assert find_matches(table, line) == []  # optical linewidth ~2 MHz
    assert [m.L_c for m in find_matches(table, line, tolerance="microwave")] == [13]


def test_type_two_match_reports_bias():
    g = reference_geometry(R_in=2.61e-3, ring_material="lithium-tantalate")
    line = PhaseMatchLine.type_two(g)
    Ls = np.arange(74, 80)
    f = line.omega(Ls, 0.0) / TWO_PI / 1e9 + 1.0
    (m,) = [m for m in find_matches(DispersionTable.from_arrays(Ls, f), line) if m.L_c == 77]
    assert m.conversion_type == TYPE_II
    assert m.bias_voltage == pytest.approx(TWO_PI * 1e9 / line.bias_sensitivity)
    assert abs(m.detuning) < 1.0


def test_envelope_rules_out_lithium_niobate():
    g = reference_geometry()
    for pol in ("extraordinary", "ordinary"):
        for br in (STOKES, ANTI_STOKES):
            line = PhaseMatchLine.type_two(g, branch=br, pump_polarization=pol)
            assert len(envelope_matches(line, g, 6.72)) == 0


def test_selection_rules():
    wa = 1.2e15
    wc = Frequency.from_ghz(100.0).value
    assert selection_rule_check(24803, 24816, 13, wa, wa + wc, wc, ANTI_STOKES)
    assert not selection_rule_check(24803, 24816, 13, wa, wa + 1.01 * wc, wc, ANTI_STOKES)
    assert selection_rule_check(24803, 24790, 13, wa, wa - wc, wc, STOKES)
    assert TYPE_I == "I"
