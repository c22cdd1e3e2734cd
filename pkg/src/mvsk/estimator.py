"""scikit-learn style wrapper around :func:`mvsk.solver.solve`.

``fit`` takes a (T, n) return matrix, ``predict`` maps return rows to the
fitted portfolio's returns and ``score`` is the negative objective, so larger
is better as scikit-learn expects.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigError
from .instance import PreferenceCoefficients, center_panel, crra_coefficients
from .oracle import MVSKObjective, value
from .solver import SolverConfig, preset, solve


class MVSKPortfolio(BaseEstimator):
    """Long-only MVSK portfolio.

    Parameters
    ----------
    coeffs : sequence of 4 floats, optional
        Moment weights ``(c1, c2, c3, c4)``.  Ignored when ``gamma`` is set.
    gamma : float, optional
        CRRA risk aversion; overrides ``coeffs``.
    config : {"small", "large"} or SolverConfig
    tol : float, optional
        KKT tolerance; the preset's value when None.
    tau : float, optional
        Weight floor; the preset's value when None.
    max_iter : int, optional

    Attributes
    ----------
    weights_ : ndarray of shape (n_features_in_,)
    report_ : SolveReport
    coeffs_ : PreferenceCoefficients
    n_features_in_ : int
    """

    def __init__(self, coeffs=None, gamma=None, config="small", tol=None, tau=None,
                 max_iter=None):
        self.coeffs = coeffs
        self.gamma = gamma
        self.config = config
        self.tol = tol
        self.tau = tau
        self.max_iter = max_iter

    def _coefficients(self):
        if self.gamma is not None:
            return crra_coefficients(self.gamma)
        if self.coeffs is None:
            raise ConfigError("set either coeffs or gamma")
        return PreferenceCoefficients.coerce(self.coeffs)

    def _solver_config(self):
        cfg = preset(self.config) if isinstance(self.config, str) else self.config
        if not isinstance(cfg, SolverConfig):
            raise ConfigError(f"config must be a preset name or SolverConfig, got {type(cfg)}")
        changes = {}
        if self.tol is not None:
            changes["epsilon"] = float(self.tol)
        if self.tau is not None:
            changes["tau"] = float(self.tau)
        if self.max_iter is not None:
            changes["max_iter"] = int(self.max_iter)
        return replace(cfg, **changes) if changes else cfg

    def fit(self, X, y=None, x0=None):
        """Solve for the portfolio on returns ``X`` of shape (T, n)."""
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        self.coeffs_ = self._coefficients()
        self.panel_ = center_panel(X)
        self.report_ = solve(self.panel_, self.coeffs_, x0=x0, config=self._solver_config())
        self.weights_ = self.report_.x_star
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Portfolio returns ``X @ weights_``."""
        check_is_fitted(self, "weights_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.weights_

    def score(self, X, y=None):
        """Negative MVSK objective of the fitted weights on returns ``X``."""
        check_is_fitted(self, "weights_")
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        obj = MVSKObjective.from_panel(center_panel(X), self.coeffs_)
        return -value(obj.cache(self.weights_))
