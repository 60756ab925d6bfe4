"""scikit-learn style wrappers around the flow and escape computations.

The library's core objects are lattices, witnesses and certificates,
which do not fit the estimator mould; these wrappers cover the parts that
do, namely maps from point clouds in R^n to features or estimates, so the
computations compose with pipelines and grid searches.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dynamics import UnimodularLattice, flow_systole_scan, systole
from .measures import alpha_fit, binomial_ci
from .weights import as_weights

__all__ = ["FlowSystoleTransformer", "EscapeEstimator", "DecayExponentRegressor"]


class FlowSystoleTransformer(TransformerMixin, BaseEstimator):
    """Map each x to the systoles of ``g_t tau(x) Z^{n+1}`` at fixed times.

    Parameters
    ----------
    r : sequence of float
        Flow weights.
    times : sequence of float
        Output columns, one per time.
    norm : {"euclidean", "sup"}
    """

    def __init__(self, r=(0.5, 0.5), times=(0.0, 1.0, 2.0), norm="euclidean"):
        self.r = r
        self.times = times
        self.norm = norm

    def fit(self, X, y=None):
        X = check_array(X)
        w = as_weights(self.r)
        if X.shape[1] != w.n:
            raise ValueError(f"X has {X.shape[1]} columns, weights have {w.n}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        w = as_weights(self.r)
        out = np.empty((X.shape[0], len(self.times)))
        for i, x in enumerate(X):
            for j, t in enumerate(self.times):
                out[i, j] = systole(UnimodularLattice.from_flow(x, w, float(t)), self.norm).length
        return out

    def get_feature_names_out(self, input_features=None):
        return np.array([f"systole_t{t:g}" for t in self.times], dtype=object)


class EscapeEstimator(BaseEstimator):
    """Escape fraction of an empirical measure at ``(t, eps)``.

    ``fit`` treats the rows of X as samples of the measure and stores the
    fraction whose lattice leaves ``K_eps`` with its 95% interval;
    ``predict`` flags escaping rows.
    """

    def __init__(self, r=(0.5, 0.5), t=6.0, eps=0.1, norm="euclidean"):
        self.r = r
        self.t = t
        self.eps = eps
        self.norm = norm

    def _escaped(self, X):
        lengths, _ = flow_systole_scan(X, as_weights(self.r), float(self.t), float(self.eps), self.norm)
        return np.isfinite(lengths)

    def fit(self, X, y=None):
        X = check_array(X)
        if self.t < 0 or self.eps <= 0:
            raise ValueError("need t >= 0 and eps > 0")
        self.n_features_in_ = X.shape[1]
        esc = self._escaped(X)
        k = int(esc.sum())
        self.escape_fraction_ = k / len(X)
        self.ci_ = binomial_ci(k, len(X))
        return self

    def predict(self, X):
        check_is_fitted(self, "escape_fraction_")
        return self._escaped(check_array(X))


class DecayExponentRegressor(RegressorMixin, BaseEstimator):
    """Power law ``f = C eps^alpha`` fitted on a log-log scale."""

    def fit(self, X, y):
        X = check_array(X)
        y = np.asarray(y, dtype=float)
        fit = alpha_fit(list(zip(X[:, 0], y)))
        self.alpha_ = fit.alpha
        self.C_ = fit.C
        self.residual_ = fit.residual
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "alpha_")
        X = check_array(X)
        return self.C_ * X[:, 0] ** self.alpha_
