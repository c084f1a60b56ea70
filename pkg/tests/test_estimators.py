import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from wgm_upconvert.estimators import InnerRadiusEstimator, LorentzianDipFitter
from wgm_upconvert.spectra import lorentzian_dip


def test_dip_fitter_round_trip():
    f = np.linspace(98, 102, 2001)
    T = lorentzian_dip(f, 100.0, 1.0, 0.82) + np.random.default_rng(2).normal(0, 10**-1.5, f.size)
    est = LorentzianDipFitter().fit(f[::-1], T[::-1])  # order does not matter
    assert est.Q_ == pytest.approx(100, rel=0.02)
    assert est.C_ == pytest.approx(0.82, abs=0.02)
    assert est.score(f, lorentzian_dip(f, 100.0, 1.0, 0.82)) > 0.99


def test_dip_fitter_unfitted_and_shapes():
    with pytest.raises(NotFittedError):
        LorentzianDipFitter().predict([1.0])
    with pytest.raises(ValueError):
        LorentzianDipFitter().fit(np.arange(10.0), np.ones(9))
    est = clone(LorentzianDipFitter(guess=(100, 1, 0.5)))
    assert est.get_params() == {"guess": (100, 1, 0.5)}


def test_inner_radius_input_checks(ln_geometry):
    est = InnerRadiusEstimator()
    with pytest.raises(ValueError, match="base_geometry"):
        est.fit([[2.9e-3, 13]], [100.0])
    est = InnerRadiusEstimator(base_geometry=ln_geometry, indices={"ring": 5.15, "post": 1.9})
    with pytest.raises(ValueError, match="two columns"):
        est.fit([2.9e-3, 13], [100.0])
    with pytest.raises(ValueError, match="same number"):
        est.fit([[2.9e-3, 13], [2.9e-3, 14]], [100.0])
    with pytest.raises(NotFittedError):
        est.predict([[2.9e-3, 13]])
    series = est._series(np.array([[2.95e-3, 13], [2.9e-3, 12], [2.9e-3, 13]]), [99.0, 98.0, 100.0])
    assert [s.R for s in series] == [2.9e-3, 2.95e-3]
    assert series[0].L_c == (12, 13)
