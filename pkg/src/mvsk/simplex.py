"""Simplex geometry: tangent basis, steplength caps, slice projection, faces.

The slice ``Delta(tau) = {x : sum(x) = 1, x_i >= tau}`` is the feasible set
the solver works on.  Its tangent space is ``{v : sum(v) = 0}``; an orthonormal
basis ``U`` of it comes from the Householder reflector sending ``e_1`` to
``1/sqrt(n)``, applied in O(n) without ever forming ``U``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._validation import FEAS_TOL, check_portfolio, check_tau
from .exceptions import ContractViolation, DimensionError, DomainError
from .oracle import MVSKObjective, gradient

PIN_TOL = 1e-12


class TangentBasis:
    """Orthonormal basis of the zero-sum subspace, plus a reference point.

    ``U`` is the last ``n - 1`` columns of ``H = I - beta v v'`` with
    ``v = e_1 - 1/sqrt(n)``, so ``H e_1 = 1/sqrt(n)`` and the remaining
    columns are orthogonal to the all-ones vector.
    """

    def __init__(self, n, x_ref=None):
        n = int(n)
        if n < 2:
            raise DimensionError(f"tangent basis needs n >= 2, got {n}")
        self.n = n
        if x_ref is None:
            x_ref = np.full(n, 1.0 / n)
        x_ref = np.asarray(x_ref, dtype=np.float64)
        if x_ref.shape != (n,) or x_ref.min() <= 0 or abs(x_ref.sum() - 1.0) > 1e-12:
            raise DomainError("x_ref must be a strictly positive portfolio summing to one")
        self.x_ref = x_ref
        v = np.full(n, -1.0 / np.sqrt(n))
        v[0] += 1.0
        self._v = v
        self._beta = 2.0 / (v @ v)

    @property
    def dim(self):
        return self.n - 1

    def apply(self, y):
        """``U @ y`` for a vector or an (n-1, k) matrix."""
        y = np.asarray(y, dtype=np.float64)
        v = self._v
        coef = self._beta * (v[1:] @ y)
        out = np.empty((self.n,) + y.shape[1:])
        out[0] = 0.0
        out[1:] = y
        out -= np.multiply.outer(v, coef)
        return out

    def apply_t(self, x):
        """``U.T @ x`` for a vector or an (n, k) matrix."""
        x = np.asarray(x, dtype=np.float64)
        v = self._v
        coef = self._beta * (v @ x)
        return x[1:] - np.multiply.outer(v[1:], coef)

    @cached_property
    def matrix(self):
        return self.apply(np.eye(self.n - 1))

    def lift(self, y):
        return self.x_ref + self.apply(y)

    def reduce(self, x):
        return self.apply_t(np.asarray(x, dtype=np.float64) - self.x_ref)


def build_tangent_basis(n, x_ref=None):
    return TangentBasis(n, x_ref)


def alpha_max(x, d, tau=0.0):
    """Largest ``alpha`` with ``x + alpha d`` still in ``Delta(tau)``.

    Only coordinates with ``d_i < 0`` can bind; a nonzero tangent direction
    always has one, so the cap is finite.
    """
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if x.min() < tau - FEAS_TOL or abs(x.sum() - 1.0) > 1e-10:
        raise DomainError("x lies outside the simplex slice")
    dnorm = np.abs(d).sum()
    if abs(d.sum()) > 1e-10 * max(1.0, dnorm):
        raise ContractViolation(f"direction is not tangent (sum = {d.sum():.3e})")
    neg = d < 0
    if not neg.any():
        if dnorm == 0:
            raise ContractViolation("zero direction")
        raise ContractViolation("tangent direction without a negative component")
    gaps = np.maximum(x[neg] - tau, 0.0)
    return float(np.min(gaps / -d[neg]))


def _project_simplex(v, mass):
    # sort-and-threshold projection onto {w >= 0, sum(w) = mass}
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - mass
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def project_slice(v, tau=0.0):
    """Euclidean projection of ``v`` onto ``Delta(tau)``."""
    v = np.asarray(v, dtype=np.float64)
    tau = check_tau(tau, v.size)
    mass = 1.0 - v.size * tau
    return tau + _project_simplex(v - tau, mass)


def tangent_residual(g):
    """``||(I - 11'/n) g||_2``, the interior stationarity measure."""
    g = np.asarray(g, dtype=np.float64)
    return float(np.linalg.norm(g - g.mean()))


def kkt_residual_from_gradient(g, x, tau=0.0, pin_tol=PIN_TOL):
    """Projected-simplex KKT residual of ``Delta(tau)`` at ``x`` given ``g``.

    With ``F`` the coordinates above the floor and ``lam = mean(g_F)``, the
    residual is ``||g_F - lam||`` combined with the multiplier-sign violations
    ``min(g_i - lam, 0)`` of the pinned coordinates.  When nothing is pinned
    this is exactly ``||(I - 11'/n) g||``.
    """
    g = np.asarray(g, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    pinned = x <= tau + pin_tol
    free = ~pinned
    if not free.any():
        free = x >= x.max()
        pinned = ~free
    lam = g[free].mean()
    r_free = g[free] - lam
    r_pin = np.minimum(g[pinned] - lam, 0.0)
    return float(np.sqrt(r_free @ r_free + r_pin @ r_pin))


def projected_kkt_residual(panel, coeffs, x, tau=0.0, pin_tol=PIN_TOL):
    """KKT residual of ``x`` for the MVSK problem on ``Delta(tau)``."""
    obj = panel if isinstance(panel, MVSKObjective) else MVSKObjective.from_panel(panel, coeffs)
    x = np.asarray(x, dtype=np.float64)
    return kkt_residual_from_gradient(gradient(obj.cache(x)), x, tau, pin_tol)


@dataclass(frozen=True)
class FaceState:
    """A face of ``Delta(tau)``: ``pinned`` coordinates sit at ``tau``.

    The free block is rescaled to a unit simplex, ``x_F = mass * x'`` with
    ``mass = 1 - |pinned| tau``, whose own slice floor is ``tau / mass``.
    """

    free: np.ndarray
    pinned: np.ndarray
    tau: float
    n: int

    @property
    def mass(self):
        return 1.0 - self.pinned.size * self.tau

    @property
    def sub_tau(self):
        return self.tau / self.mass

    @property
    def dim(self):
        return self.free.size

    def to_sub(self, x):
        return np.asarray(x, dtype=np.float64)[self.free] / self.mass

    def to_full(self, x_sub):
        x = np.full(self.n, self.tau)
        x[self.free] = self.mass * np.asarray(x_sub, dtype=np.float64)
        return x

    def direction_to_full(self, d_sub):
        d = np.zeros(self.n)
        d[self.free] = self.mass * np.asarray(d_sub, dtype=np.float64)
        return d


def restrict_to_face(objective, x, tau, pinned=None):
    """Restrict ``objective`` to the face of ``Delta(tau)`` pinned at ``x``.

    Returns ``(face, sub_objective, x_sub)``.  The pinned columns are folded
    into an offset of ``z`` and a constant, so ``sub_objective(x_sub)`` equals
    ``objective(x)``.

    Raises
    ------
    DomainError
        If every coordinate is pinned.
    """
    x = check_portfolio(x, objective.n, tau)
    if pinned is None:
        pinned = x <= tau + PIN_TOL
    pinned = np.asarray(pinned, dtype=bool)
    if pinned.all():
        raise DomainError("degenerate face: every coordinate is pinned")
    face = FaceState(free=np.flatnonzero(~pinned), pinned=np.flatnonzero(pinned),
                     tau=float(tau), n=objective.n)
    if face.pinned.size == 0:
        return face, objective, x.copy()
    mass = face.mass
    A = objective.A
    z0 = tau * A[:, face.pinned].sum(axis=1)
    if objective.z_offset is not None:
        z0 = z0 + objective.z_offset
    f0 = objective.f_offset - objective.c[0] * tau * objective.mu[face.pinned].sum()
    sub = MVSKObjective(
        np.ascontiguousarray(mass * A[:, face.free]),
        mass * objective.mu[face.free],
        objective.c,
        z_offset=z0,
        f_offset=f0,
        counter=objective.counter,
    )
    return face, sub, face.to_sub(x)
