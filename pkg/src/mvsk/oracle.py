"""Exact matrix-free sample oracle.

With ``z = A x + z0`` and ``psi(s) = c2 s^2 - c3 s^3 + c4 s^4`` the objective
is ``f(x) = -c1 mu'x + f0 + (1/T) sum_t psi(z_t)``.  All derivatives reduce
to products with ``A`` and ``A.T`` plus elementwise work on ``z``:

    grad f    = -c1 mu + A'psi'(z) / T
    hess f v  = A'(psi''(z) * Av) / T
    D3 f[u,v] = A'(psi'''(z) * Au * Av) / T

The offset ``z0`` and constant ``f0`` are zero for a full panel; they absorb
the pinned coordinates when the solver restricts itself to a simplex face.

Every product with ``A`` or ``A.T`` is counted in :class:`KernelCounter`
(a matrix right-hand side with ``k`` columns counts as ``k`` passes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError, NumericError
from .instance import PreferenceCoefficients, ReturnPanel


@dataclass
class KernelCounter:
    matvec: int = 0
    rmatvec: int = 0
    value_grad: int = 0
    hvp: int = 0
    third: int = 0

    @property
    def passes(self):
        return self.matvec + self.rmatvec

    def reset(self):
        self.matvec = self.rmatvec = self.value_grad = self.hvp = self.third = 0


def _ncols(v):
    return 1 if v.ndim == 1 else v.shape[1]


def _finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr


class MVSKObjective:
    """Sample-moment MVSK objective over the columns of ``A``.

    Parameters
    ----------
    A : ndarray of shape (T, n)
        Centered returns (or a scaled column subset of them on a face).
    mu : ndarray of shape (n,)
    coeffs : array-like of 4 floats
    z_offset : ndarray of shape (T,), optional
    f_offset : float, default 0.0
    counter : KernelCounter, optional
        Shared counter; faces built from a parent reuse the parent's counter.
    """

    def __init__(self, A, mu, coeffs, z_offset=None, f_offset=0.0, counter=None):
        self.A = A
        self.mu = mu
        self.c = PreferenceCoefficients.coerce(coeffs).as_array()
        self.z_offset = z_offset
        self.f_offset = float(f_offset)
        self.counter = counter if counter is not None else KernelCounter()

    @classmethod
    def from_panel(cls, panel: ReturnPanel, coeffs, counter=None):
        return cls(panel.A, panel.mu, coeffs, counter=counter)

    @property
    def T(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    def matvec(self, v):
        self.counter.matvec += _ncols(v)
        return self.A @ v

    def rmatvec(self, w):
        self.counter.rmatvec += _ncols(w)
        return self.A.T @ w

    # scalar response and its derivatives, vectorised over z
    def psi(self, s):
        _, c2, c3, c4 = self.c
        return s * s * (c2 - c3 * s + c4 * s * s)

    def dpsi(self, s):
        _, c2, c3, c4 = self.c
        return s * (2 * c2 - 3 * c3 * s + 4 * c4 * s * s)

    def d2psi(self, s):
        _, c2, c3, c4 = self.c
        return 2 * c2 - 6 * c3 * s + 12 * c4 * s * s

    def d3psi(self, s):
        _, _, c3, c4 = self.c
        return -6 * c3 + 24 * c4 * s

    def cache(self, x):
        """Project ``x`` once and return the per-iterate :class:`OracleCache`."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise DimensionError(f"x has shape {x.shape}, expected ({self.n},)")
        z = self.matvec(x)
        if self.z_offset is not None:
            z = z + self.z_offset
        _finite(z, "z = Ax")
        z2 = z * z
        return OracleCache(objective=self, x=x, z=z, z2=z2, z3=z2 * z)

    def __call__(self, x):
        return value(self.cache(x))


@dataclass(eq=False)
class OracleCache:
    """Iterate ``x`` with the cached projection ``z`` and its powers."""

    objective: MVSKObjective
    x: np.ndarray
    z: np.ndarray
    z2: np.ndarray
    z3: np.ndarray
    _f: float | None = field(default=None, repr=False)
    _g: np.ndarray | None = field(default=None, repr=False)

    @property
    def f_value(self):
        return value(self)

    @property
    def grad(self):
        return gradient(self)


def moments(cache):
    """Return ``(m1, m2, m3, m4)``: mean and centered sample moments of ``x``."""
    obj = cache.objective
    T = obj.T
    m1 = float(obj.mu @ cache.x)
    return (m1, float(cache.z2.sum() / T), float(cache.z3.sum() / T),
            float((cache.z2 * cache.z2).sum() / T))


def value(cache):
    if cache._f is None:
        obj = cache.objective
        c1, c2, c3, c4 = obj.c
        T = obj.T
        f = (-c1 * float(obj.mu @ cache.x) + obj.f_offset
             + (c2 * cache.z2.sum() - c3 * cache.z3.sum() + c4 * (cache.z2 @ cache.z2)) / T)
        if not np.isfinite(f):
            raise NumericError("objective value is not finite")
        cache._f = float(f)
    return cache._f


def gradient(cache):
    """Gradient; one back-projection by ``A.T``, memoised in the cache."""
    if cache._g is None:
        obj = cache.objective
        c1, c2, c3, c4 = obj.c
        weights = (2 * c2 * cache.z - 3 * c3 * cache.z2 + 4 * c4 * cache.z3) / obj.T
        g = -c1 * obj.mu + obj.rmatvec(weights)
        cache._g = _finite(g, "gradient")
        obj.counter.value_grad += 1
    return cache._g


def hessian_diag_weights(cache):
    """Per-sample curvature ``psi''(z_t)``; the Hessian is ``A' diag(.) A / T``."""
    return cache.objective.d2psi(cache.z)


def hvp(cache, v):
    """Hessian-vector product; ``v`` may be a vector or an (n, k) matrix."""
    obj = cache.objective
    v = np.asarray(v, dtype=np.float64)
    Av = obj.matvec(v)
    w = hessian_diag_weights(cache) / obj.T
    out = obj.rmatvec(w[:, None] * Av if Av.ndim == 2 else w * Av)
    obj.counter.hvp += _ncols(v)
    return _finite(out, "Hessian-vector product")


def third_action(cache, u, v):
    """Directional third derivative ``D^3 f(x)[u, v, .]`` as an n-vector.

    For (n, k) matrices ``u`` and ``v`` the column-pair actions are summed:
    ``sum_j D^3 f(x)[u_j, v_j, .]``, which costs three batched passes.
    """
    obj = cache.objective
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    Au = obj.matvec(u)
    Av = obj.matvec(v)
    prod = Au * Av
    if prod.ndim == 2:
        prod = prod.sum(axis=1)
    out = obj.rmatvec(obj.d3psi(cache.z) * prod / obj.T)
    obj.counter.third += _ncols(u)
    return _finite(out, "third-order action")
