import math

import numpy as np
import pytest
from scipy.constants import c
from scipy.special import jn_zeros, jnp_zeros

from wgm_upconvert.constants import Frequency
from wgm_upconvert.fem import (
    ConvergenceFailure,
    DispersionTable,
    OutOfWindow,
    assemble,
    dispersion_scan,
    eigenpairs,
    export_vtk,
    fundamental_mode,
    field_probe,
    mode_volume,
    select_fundamental,
    solve_modes,
)
from wgm_upconvert.geometry import cavity_mesh, cross_section_profile, generate_mesh
from wgm_upconvert.vtk import read_unstructured_grid

from conftest import LN_INDICES

A, D = 10e-3, 12e-3
TM010 = c * jn_zeros(0, 1)[0] / (2 * math.pi * A)
TE111 = c / (2 * math.pi) * math.hypot(jnp_zeros(1, 1)[0] / A, math.pi / D)


def _nearest(sols, f):
    fs = np.array([s.omega_c.hz for s in sols])
    return fs[np.argmin(abs(fs - f))]


@pytest.mark.parametrize("f, m, fam", [(TM010, 0, "z"), (TE111, 1, "r")])
def test_cavity_modes(f, m, fam):
    errs = []
    for div in (15, 30):
        mesh = cavity_mesh(A, D, c / f / div)
        ops = assemble(mesh, {}, m, symmetry=fam, allow_axisymmetric=True)
        errs.append(abs(_nearest(solve_modes(ops, Frequency(2 * math.pi * 0.97 * f), count=3), f) / f - 1))
    assert errs[0] < 5e-3
    assert errs[0] / errs[1] >= 3


def test_families_partition_the_spectrum():
    mesh = cavity_mesh(A, D, 1.2e-3)
    target = Frequency.from_ghz(16)
    full = eigenpairs(assemble(mesh, {}, 1), target, count=6).omega
    halves = np.sort(np.concatenate([eigenpairs(assemble(mesh, {}, 1, symmetry=s), target, count=6).omega for s in "rz"]))
    # the six nearest of the union are the six nearest of the full problem
    near = halves[np.argsort(abs(halves - target.value))[:6]]
    assert np.allclose(np.sort(near), np.sort(full), rtol=1e-7)


def test_axisymmetric_order_needs_flag():
    with pytest.raises(ValueError):
        assemble(cavity_mesh(A, D, 2e-3), {}, 0)


def test_residual_bound():
    ops = assemble(cavity_mesh(A, D, 2e-3), {}, 1, symmetry="r")
    with pytest.raises(ConvergenceFailure):
        eigenpairs(ops, Frequency.from_ghz(15), count=3, tol=1e-30)


def test_ln_mode_is_ring_guided(ln_coarse_mode, ln_geometry):
    s = ln_coarse_mode
    assert s.family == "r"
    assert 95 < s.f_ghz < 106
    assert s.ring_energy_fraction > 0.6
    ratio = mode_volume(s) / ln_geometry.ring_volume()
    assert 0.1 < ratio < 3
    assert mode_volume(s, "energy") > 0
    # fields are normalised to unit maximum
    assert np.linalg.norm(s.field, axis=1).max() == pytest.approx(1.0, rel=1e-9)


def test_probe_inside_and_outside(ln_coarse_mode, ln_geometry):
    E = field_probe(ln_coarse_mode, ln_geometry.R - 30e-6, 0.0)
    assert np.linalg.norm(E) > 0.1
    assert abs(E[2]) < 1e-6  # in-plane family: E_z odd in z
    far = ln_coarse_mode.mesh.nodes[:, 0].max() * 0.999
    assert np.linalg.norm(field_probe(ln_coarse_mode, far, 0.0)) < 1e-3
    with pytest.raises(OutOfWindow):
        field_probe(ln_coarse_mode, 1.0, 0.0)


def test_vtk_round_trip(ln_coarse_mode, tmp_path):
    p = tmp_path / "mode.vtk"
    export_vtk(ln_coarse_mode, p)
    grid = read_unstructured_grid(p)
    assert grid["points"].shape[0] == ln_coarse_mode.mesh.n_nodes
    assert "abs_E" in grid["point_data"]


def test_select_fundamental_tie_goes_low():
    class C:
        def __init__(self, f, frac):
            self.omega_c, self.ring_energy_fraction = Frequency.from_ghz(f), frac

    a, b, d = C(100, 0.80), C(99, 0.795), C(120, 0.5)
    assert select_fundamental([a, b, d]) is b
    assert select_fundamental([a, C(90, 0.7)]) is a
    assert select_fundamental([]) is None


def test_dispersion_scan_small(ln_geometry, ln_coarse_mesh, tmp_path):

    t = dispersion_scan(ln_geometry, LN_INDICES, range(12, 15), target_ghz=100, mesh=ln_coarse_mesh)
    assert t.monotonic and [r.family for r in t] == ["r"] * 3
    t.to_csv(tmp_path / "d.csv")
    back = DispersionTable.from_csv(tmp_path / "d.csv")
    assert np.allclose(back.omega, t.omega, rtol=1e-6)
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "L_c,f_GHz,ring_energy_fraction"
    with pytest.raises(ValueError):
        dispersion_scan(ln_geometry, LN_INDICES, [])
    with pytest.raises(ValueError):
        dispersion_scan(ln_geometry, LN_INDICES, [12, 14])


def test_window_size_insensitive(ln_geometry, ln_coarse_mode):
    # PEC wall pushed from 1.5 to 2.5 free-space wavelengths out
    lam = c / 100e9
    profile = cross_section_profile(ln_geometry, margin=2.5 * lam, target_frequency_hz=100e9)
    # the larger box holds more empty-cavity modes near the target
    wide = fundamental_mode(generate_mesh(profile, 100e-6), LN_INDICES, 13, Frequency.from_ghz(95), family="r", count=24)
    assert wide.f_ghz == pytest.approx(ln_coarse_mode.f_ghz, rel=5e-3)
