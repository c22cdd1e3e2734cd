"""Input validation helpers shared by the solver, estimator and CLI."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DataError, DimensionError, DomainError

# feasibility tolerance for membership in the simplex slice
FEAS_TOL = 1e-12


def check_returns(R, *, min_periods=2):
    """Validate a return matrix and return it as a C-contiguous float64 array."""
    try:
        R = check_array(R, dtype=np.float64, order="C", ensure_all_finite=False,
                        ensure_min_samples=1, copy=False)
    except ValueError as exc:
        raise DimensionError(str(exc)) from exc
    if R.shape[0] < min_periods:
        raise DimensionError(f"need at least {min_periods} periods, got T={R.shape[0]}")
    if not np.all(np.isfinite(R)):
        bad = np.argwhere(~np.isfinite(R))[0]
        raise DataError(f"non-finite return at period {bad[0]}, asset {bad[1]}")
    return R


def check_coefficients(coeffs):
    c = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    if c.shape != (4,):
        raise DataError(f"expected 4 preference coefficients, got {c.size}")
    if not np.all(np.isfinite(c)) or np.any(c < 0):
        raise DataError(f"preference coefficients must be finite and nonnegative, got {c}")
    if not np.any(c > 0):
        raise DataError("preference coefficients are all zero")
    return c


def check_tau(tau, n):
    tau = float(tau)
    if not (0.0 <= tau < 1.0 / n):
        raise DomainError(f"slice floor tau={tau} must lie in [0, 1/n) with n={n}")
    return tau


def check_portfolio(x, n, tau=0.0, tol=FEAS_TOL):
    """Return ``x`` as float64 if it lies in the slice ``{x >= tau, sum(x) = 1}``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape != (n,):
        raise DimensionError(f"portfolio has length {x.size}, expected {n}")
    if not np.all(np.isfinite(x)):
        raise DomainError("portfolio has non-finite weights")
    if x.min() < tau - tol or abs(x.sum() - 1.0) > max(tol, 1e-10):
        raise DomainError(
            f"portfolio outside the simplex slice (min={x.min():.3e}, tau={tau:.3e}, "
            f"sum-1={x.sum() - 1.0:.3e})"
        )
    return x
