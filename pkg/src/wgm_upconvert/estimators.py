"""scikit-learn style wrappers for the two fitted quantities.

Only the spectrum-side fits are estimators: a Lorentzian dip and the inner
radius of a radius series. The eigen-solver has nothing to learn from data,
so it stays a plain function.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .spectra import SeriesItem, fit_geometry, fit_lorentzian, lorentzian_dip, model_frequencies


class LorentzianDipFitter(RegressorMixin, BaseEstimator):
    """Single-dip fit of transmission versus frequency (GHz).

    ``fit(X, y)`` takes frequencies as ``X`` (1-D or one column) and the
    transmission as ``y``. Fitted attributes: ``f0_``, ``Q_``, ``C_``,
    ``rmse_`` and the full ``result_``.
    """

    def __init__(self, guess=None):
        self.guess = guess

    def fit(self, X, y):
        f = np.asarray(X, float).reshape(-1)
        T = np.asarray(y, float).reshape(-1)
        if f.shape != T.shape:
            raise ValueError("X and y must hold the same number of samples")
        order = np.argsort(f, kind="stable")
        res = fit_lorentzian(f[order], T[order], self.guess)
        self.result_ = res
        self.f0_, self.Q_, self.C_, self.rmse_ = res.f0, res.Q, res.C, res.rmse
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        f = np.asarray(X, float).reshape(-1)
        return lorentzian_dip(f, self.f0_, self.f0_ / self.Q_, self.C_)


class InnerRadiusEstimator(BaseEstimator):
    """Effective inner radius from labeled resonances of a radius series.

    ``X`` rows are ``(R_m, L_c)``; ``y`` the measured frequencies in GHz.
    Rows sharing ``R`` form one spectrum. Fitted attributes: ``R_in_``,
    ``uncertainty_``, ``objective_`` and ``result_``.
    """

    def __init__(self, base_geometry=None, indices=None, interval=(2.48e-3, 2.75e-3), edge_length=100e-6, family=None, xatol=1e-6):
        self.base_geometry = base_geometry
        self.indices = indices
        self.interval = interval
        self.edge_length = edge_length
        self.family = family
        self.xatol = xatol

    def _series(self, X, y):
        X = np.asarray(X, float)
        if X.ndim != 2 or X.shape[1] != 2:
            raise ValueError("X must have two columns: R_m, L_c")
        y = np.asarray(y, float).reshape(-1)
        if len(y) != len(X):
            raise ValueError("X and y must hold the same number of samples")
        out = []
        for R in sorted(set(X[:, 0])):
            k = X[:, 0] == R
            out.append(SeriesItem(float(R), tuple(y[k]), tuple(int(L) for L in X[k, 1])))
        return out

    def fit(self, X, y):
        if self.base_geometry is None or self.indices is None:
            raise ValueError("base_geometry and indices must be set")
        series = self._series(X, y)
        res = fit_geometry(series, self.base_geometry, self.indices, self.interval, self.edge_length, self.family, self.xatol)
        self.result_ = res
        self.R_in_, self.uncertainty_, self.objective_ = res.R_in, res.uncertainty, res.objective
        return self

    def predict(self, X):
        """Model frequencies (GHz) at the fitted inner radius."""
        check_is_fitted(self, "result_")
        X = np.asarray(X, float)
        out = np.empty(len(X))
        for R in sorted(set(X[:, 0])):
            k = X[:, 0] == R
            Ls = [int(L) for L in X[k, 1]]
            freqs, _ = model_frequencies(self.base_geometry, self.indices, R, self.R_in_, Ls, self.edge_length, self.family)
            out[k] = [freqs[L] for L in Ls]
        return out
