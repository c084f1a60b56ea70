import numpy as np
import pytest

from wgm_upconvert.cli import main
from wgm_upconvert.config import ConfigError, RunConfig
from wgm_upconvert.spectra import synthetic_spectrum

COARSE = ["--set", "solver.edge_um=100", "--set", "solver.l_min=12", "--set", "solver.l_max=14"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_print_config_is_complete_and_stable(capsys, tmp_path):
    code, text, _ = run(capsys, "--print-config")
    assert code == 0
    for section in ("geometry", "materials", "solver", "phasematch", "conversion", "dynamics", "spectrum", "output"):
        assert f"[{section}]" in text
    assert "auto" not in text.split("[solver]")[0]
    p = tmp_path / "resolved.ini"
    p.write_text(text)
    again = RunConfig.from_file(p).resolved().to_text()
    assert again.split("\n", 1)[1] == text.split("\n", 1)[1]


def test_config_errors_name_the_field(tmp_path):
    with pytest.raises(ConfigError, match=r"\[conversion\] q_microwave"):
        RunConfig.from_text("[conversion]\nq_microwave = 0\n").validate()
    with pytest.raises(ConfigError, match=r"\[geometry\] bogus"):
        RunConfig.from_text("[geometry]\nbogus = 1\n")
    with pytest.raises(ConfigError, match="empty L_c range"):
        RunConfig.from_text("[solver]\nl_min = 15\nl_max = 11\n").validate()
    with pytest.raises(ConfigError, match=r"\[geometry\]"):
        RunConfig.from_text("[geometry]\nr_inner_mm = 3.0\n").validate()


@pytest.mark.parametrize(
    "argv",
    [
        ["--set", "conversion.q_microwave=0", "design-rim"],
        ["--set", "solver.l_max=5", "dispersion"],
        ["--set", "nosuch.key=1", "design-rim"],
        ["--set", "novalue", "design-rim"],
        ["--threads", "0", "design-rim"],
    ],
)
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert err.startswith("error: ")


def test_design_rim(capsys, tmp_path):
    code, out, _ = run(capsys, "--out", str(tmp_path), "design-rim")
    assert code == 0
    assert "rho = 568 um, rho/R = 0.196" in out
    assert (tmp_path / "rim.csv").exists()
    code, out, _ = run(capsys, "--out", str(tmp_path), "design-rim", "--cylindrical")
    assert "rho = inf" in out
    code, _, err = run(capsys, "--out", str(tmp_path), "design-rim", "--prism", "fused-silica")
    assert code == 1 and "CouplingImpossible" in err


def test_dynamics_command(capsys, tmp_path):
    code, out, _ = run(capsys, "--out", str(tmp_path), "--set", "dynamics.coupling_periods=200", "--svg", "dynamics")
    assert code == 0
    assert "invariants conserved" in out and "small-signal agreement" in out
    assert (tmp_path / "dynamics.csv").read_text().startswith("t_s,")
    assert (tmp_path / "dynamics.svg").read_text().lstrip().startswith("<")


def test_spectrum_fit_and_label(capsys, tmp_path):
    f = np.linspace(95, 106, 5501)
    sp = synthetic_spectrum(f, [(98.6, 300, 0.5), (100.7, 100, 0.82)], snr_db=40)
    data = tmp_path / "s.csv"
    sp.to_csv(data)
    code, out, _ = run(capsys, "--out", str(tmp_path), "spectrum", "fit", str(data))
    assert code == 0 and "0.8" in out
    rows = (tmp_path / "spectrum_fit.csv").read_text().splitlines()
    assert rows[0] == "f0_GHz,Q,C,L_c,rmse" and len(rows) == 3

    disp = tmp_path / "d.csv"
    disp.write_text("L_c,f_GHz,ring_energy_fraction\n12,98.61,0.8\n13,100.70,0.8\n14,102.79,0.8\n")
    code, out, _ = run(capsys, "--out", str(tmp_path), "spectrum", "label", str(data), "--dispersion", str(disp))
    assert code == 0
    text = (tmp_path / "spectrum_labels.csv").read_text()
    assert ",12," in text and ",13," in text


def test_missing_spectrum_file(capsys, tmp_path):
    code, _, err = run(capsys, "--out", str(tmp_path), "spectrum", "fit", str(tmp_path / "none.csv"))
    assert code == 1 and "error:" in err


def test_coarse_dispersion_phasematch_and_mesh(capsys, tmp_path):
    code, out, _ = run(capsys, "--out", str(tmp_path), *COARSE, "--svg", "dispersion")
    assert code == 0
    rows = (tmp_path / "dispersion.csv").read_text().splitlines()
    assert rows[0] == "L_c,f_GHz,ring_energy_fraction"
    assert [r.split(",")[0] for r in rows[1:]] == ["12", "13", "14"]
    assert (tmp_path / "dispersion.svg").exists()

    code, out, _ = run(capsys, "--out", str(tmp_path), *COARSE, "--set", "phasematch.conversion_type=II", "phasematch")
    assert code == 0
    assert (tmp_path / "matches.csv").read_text().count("\n") == 1  # header only
    assert "THz" in out or "no match" in out.lower()

    code, _, _ = run(capsys, "--out", str(tmp_path), "mesh", "export", "--edge-um", "150")
    assert code == 0
    assert (tmp_path / "mesh.vtk").read_text().startswith("# vtk DataFile")


def test_fit_geometry_command(capsys, tmp_path, ln_geometry):
    from conftest import LN_INDICES
    from wgm_upconvert.spectra import model_frequencies

    freqs, _ = model_frequencies(ln_geometry, LN_INDICES, 2.9e-3, 2.52e-3, [12, 13], 100e-6, "r", 100)
    f = np.linspace(95, 125, 6001)
    sp = synthetic_spectrum(f, [(freqs[12], 300, 0.6), (freqs[13], 300, 0.6)], metadata={"R_m": 2.9e-3, "L_c": "12 13"})
    data = tmp_path / "r2900.csv"
    sp.to_csv(data)
    code, out, _ = run(
        capsys, "--out", str(tmp_path), "--set", "solver.family=r", "--set", "spectrum.fit_xatol_um=5",
        "--set", "spectrum.refine_edge_um=0", "spectrum", "fit-geometry", str(data), "--interval", "2.42e-3", "2.62e-3",
    )
    assert code == 0
    line = [x for x in out.splitlines() if x.startswith("R_in = ")][0]
    assert abs(float(line.split()[2]) - 2.52) < 0.02
    assert (tmp_path / "geometry_fit.csv").read_text().startswith("R_in_mm,objective_GHz2")
