import pytest

from wgm_upconvert.constants import eo_coefficient_convert, eo_coefficient_to_si
from wgm_upconvert.materials import (
    MATERIALS,
    MaterialFileError,
    UnknownMaterial,
    load_material_file,
    material_lookup,
)


def test_builtin_values():
    ln = material_lookup("lithium-niobate")
    assert ln.n_opt_e == 2.138
    assert (ln.n_mw_e, ln.n_mw_o) == (5.15, 6.72)
    assert ln.r33 - ln.r31 == pytest.approx(22.0)
    assert material_lookup("fused-silica").n_mw() == 1.9
    assert material_lookup("lithium-tantalate").n_mw("o") == 6.5
    assert material_lookup("diamond").n_opt_e == 2.384
    assert material_lookup("lithium-tantalate").r51 == 20.0


def test_aliases_and_unknown():
    assert material_lookup("LiNbO3") is MATERIALS["lithium-niobate"]
    with pytest.raises(UnknownMaterial):
        material_lookup("unobtainium")


def test_esu_conversion_round_trip():
    # 29 pm/V is about 8.7e-7 esu
    assert eo_coefficient_convert(29.0) == pytest.approx(8.7e-7, rel=0.01)
    assert eo_coefficient_to_si(eo_coefficient_convert(20.0)) == pytest.approx(20.0)


def test_record_file(tmp_path):
    p = tmp_path / "crystal.txt"
    p.write_text("name = test\nn_opt_e = 2.2  # comment\nn_mw_e = 5.0\nr33 = 6e-7 esu\n")
    rec = load_material_file(p)
    assert rec.n_opt_o == 2.2 and rec.n_mw_o == 5.0
    assert rec.r33 == pytest.approx(20.0, rel=0.01)
    assert material_lookup(str(p)).name == "test"


@pytest.mark.parametrize(
    "text",
    ["n_opt_e = 2.2\n", "n_opt_e = 2.2\nn_mw_e = abc\n", "n_opt_e = 2.2\nn_mw_e = 5\nbogus = 1\n", "n_opt_e = 0.5\nn_mw_e = 5\n"],
)
def test_record_file_errors(tmp_path, text):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(MaterialFileError):
        load_material_file(p)
