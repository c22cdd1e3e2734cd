"""Reduced-coordinate affine-normal (YAND) search direction.

In reduced coordinates ``x = x_ref + U y`` with ``phi(y) = f(x)``, let
``nu = grad phi / ||grad phi||`` and ``Q`` an orthonormal frame of the
complement of ``nu``.  The direction is

    u   = H_T^{-1} (h - ||grad phi|| / n * a)
    d_y = Q u - nu

with ``H_T = Q' hess(phi) Q + lam I``, ``h = Q' hess(phi) nu`` and the
log-determinant correction ``a_j = tr(H_T^{-1} D^3 phi[Q., Q., Q e_j])``.
Because ``Q' nu = 0`` the slope along ``d_y`` is exactly ``-||grad phi||``
whatever ``u`` is, so truncated or regularised solves never break descent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator

from .exceptions import ConfigError, DimensionError, StationaryPointError
from .oracle import gradient, hvp, third_action

DIRECT_CAP = 512
HUTCHINSON_THRESHOLD = 256


@dataclass
class TangentSolveConfig:
    """How the tangent system is solved.

    ``mode`` is ``"direct"`` (dense assembly and Cholesky, for n <= 512) or
    ``"pcg"`` (matrix-free conjugate gradients).  ``exact_trace=None`` picks
    the exact correction unless ``mode="pcg"`` and the frame dimension
    exceeds 256, where a Hutchinson estimate with ``probes`` Rademacher
    vectors is used instead.
    """

    mode: str = "direct"
    regularization: float = 0.0
    krylov_tol: float = 1e-3
    krylov_maxit: int = 15
    exact_trace: bool | None = None
    probes: int = 8
    jacobi: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("direct", "pcg"):
            raise ConfigError(f"unknown tangent solve mode {self.mode!r}")
        if self.regularization < 0:
            raise ConfigError("regularization must be nonnegative")
        if self.krylov_maxit < 1:
            raise ConfigError("krylov_maxit must be at least 1")


class ReducedFrame:
    """Householder frame of a reduced gradient.

    ``H = I - beta v v'`` with ``H e_1 = sign * nu``; ``Q`` is columns 2..m of
    ``H``.  The sign is chosen so ``v_1 = 1 + |nu_1|`` never cancels.
    """

    def __init__(self, reduced_grad):
        g = np.asarray(reduced_grad, dtype=np.float64)
        gnorm = float(np.linalg.norm(g))
        if gnorm == 0.0 or not np.isfinite(gnorm):
            raise StationaryPointError("reduced gradient vanished")
        self.grad_norm = gnorm
        self.nu = g / gnorm
        self.m = g.size
        sign = -1.0 if self.nu[0] > 0 else 1.0
        v = -sign * self.nu
        v[0] += 1.0
        self._v = v
        self._beta = 2.0 / (v @ v)

    def reflect(self, w):
        w = np.asarray(w, dtype=np.float64)
        return w - np.multiply.outer(self._v, self._beta * (self._v @ w))

    def apply(self, eta):
        """``Q @ eta`` for a vector or (m-1, k) matrix."""
        eta = np.asarray(eta, dtype=np.float64)
        pad = np.zeros((self.m,) + eta.shape[1:])
        pad[1:] = eta
        return self.reflect(pad)

    def apply_t(self, w):
        return self.reflect(w)[1:]

    def matrix(self):
        return self.apply(np.eye(self.m - 1))


def householder_frame(reduced_grad):
    g = np.asarray(reduced_grad)
    if g.size < 2:
        raise DimensionError("a frame needs a reduced dimension of at least 2")
    return ReducedFrame(g)


class ReducedOracle:
    """Reduced-coordinate kernels ``U' grad``, ``U' H U``, ``U' D3[U., U.]``."""

    def __init__(self, cache, basis):
        self.cache = cache
        self.basis = basis

    def gradient(self):
        return self.basis.apply_t(gradient(self.cache))

    def hvp(self, eta):
        return self.basis.apply_t(hvp(self.cache, self.basis.apply(eta)))

    def third(self, u, v):
        return self.basis.apply_t(third_action(self.cache, self.basis.apply(u),
                                               self.basis.apply(v)))


def _tangent_matmat(frame, reduced_hvp, lam):
    def matmat(E):
        return frame.apply_t(reduced_hvp(frame.apply(E))) + lam * E
    return matmat


def tangent_operator(frame, reduced_hvp, lam=0.0):
    """``eta -> Q' hess(phi) Q eta + lam eta`` as a :class:`LinearOperator`."""
    k = frame.m - 1
    matmat = _tangent_matmat(frame, reduced_hvp, lam)
    return LinearOperator((k, k), matvec=matmat, matmat=matmat, rmatvec=matmat,
                          dtype=np.float64)


def curvature_vector(frame, reduced_hvp):
    return frame.apply_t(reduced_hvp(frame.nu))


def logdet_correction(frame, inverse, reduced_third, probes=None):
    """Log-determinant correction ``a``.

    ``inverse(E)`` applies ``H_T^{-1}`` to the columns of ``E``;
    ``reduced_third(P, E)`` returns ``sum_j D^3 phi[P_j, E_j, .]``.  With
    ``probes=None`` the trace is exact (columns ``E = I``); otherwise
    ``probes`` is a (m-1, p) matrix of Rademacher vectors and the trace is
    estimated by Hutchinson's method.
    """
    k = frame.m - 1
    E = np.eye(k) if probes is None else probes
    P = inverse(E)
    a = frame.apply_t(reduced_third(frame.apply(P), frame.apply(E)))
    if probes is not None:
        a /= probes.shape[1]
    return a


def cg(matmat, B, tol, maxit, precond=None):
    """Conjugate gradients on each column of ``B`` (vectorised).

    Returns ``(X, iterations, rel_residual, breakdown)``.  A column that meets
    non-positive curvature is frozen at its current iterate and flags
    ``breakdown``.
    """
    B = np.asarray(B, dtype=np.float64)
    vec = B.ndim == 1
    if vec:
        B = B[:, None]
    X = np.zeros_like(B)
    R = B.copy()
    bnorm = np.linalg.norm(B, axis=0)
    active = bnorm > 0
    Z = R if precond is None else precond(R)
    Pd = Z.copy()
    rz = np.einsum("ij,ij->j", R, Z)
    breakdown = False
    it = 0
    while it < maxit and active.any():
        it += 1
        if active.all():
            AP = matmat(Pd)
        else:
            AP = np.zeros_like(Pd)
            AP[:, active] = matmat(Pd[:, active])
        pap = np.einsum("ij,ij->j", Pd, AP)
        bad = active & (pap <= 0)
        if bad.any():
            breakdown = True
            active &= ~bad
        step = np.where(active, rz / np.where(active, pap, 1.0), 0.0)
        X += step * Pd
        R -= step * AP
        active &= np.linalg.norm(R, axis=0) > tol * bnorm
        if not active.any():
            break
        Z = R if precond is None else precond(R)
        rz_new = np.einsum("ij,ij->j", R, Z)
        beta = np.where(active, rz_new / np.where(rz == 0, 1.0, rz), 0.0)
        Pd = Z + beta * Pd
        rz = rz_new
    safe = np.where(bnorm > 0, bnorm, 1.0)
    rel = float(np.max(np.linalg.norm(R, axis=0) / safe))
    return (X[:, 0] if vec else X), it, rel, breakdown


def _jacobi(matmat, k, rng, probes=8):
    Xi = rng.choice([-1.0, 1.0], size=(k, probes))
    diag = np.mean(Xi * matmat(Xi), axis=1)
    diag = np.where(diag > 1e-12 * max(np.abs(diag).max(), 1e-300), diag, 1.0)
    return lambda R: R / (diag[:, None] if R.ndim == 2 else diag)


def _dense_factor(H, lam):
    k = H.shape[0]
    I = np.eye(k)
    for shift in (lam, max(lam, 1e-4)):
        try:
            return sla.cho_factor(H + shift * I, lower=True), shift, shift != lam
        except sla.LinAlgError:
            continue
    # indefinite even after the shift: solve with |eigenvalues| floored
    w, V = np.linalg.eigh(H + lam * I)
    floor = 1e-4 * max(1.0, np.abs(w).max())
    w = np.maximum(np.abs(w), floor)
    return (V, w), None, True


def _dense_solve(factor, shift, E):
    if shift is None:
        V, w = factor
        return V @ ((V.T @ E) / (w[:, None] if E.ndim == 2 else w))
    return sla.cho_solve(factor, E)


def yand_direction(cache, basis, config=None):
    """Ambient YAND direction at the cached iterate.

    Returns ``(d, info)`` where ``d`` is tangent to the simplex and ``info``
    holds solve diagnostics (Krylov iterations, residual, ``||u||`` and so on).
    """
    config = config or TangentSolveConfig()
    oracle = ReducedOracle(cache, basis)
    gbar = oracle.gradient()
    gnorm = float(np.linalg.norm(gbar))
    if gnorm == 0.0:
        raise StationaryPointError("reduced gradient vanished")
    n = basis.n
    info = {"grad_norm": gnorm, "krylov_iters": 0, "krylov_residual": 0.0,
            "breakdown": False, "regularized": False, "u_norm": 0.0,
            "h_norm": 0.0, "a_norm": 0.0, "lambda": config.regularization}
    if basis.dim == 1:
        return basis.apply(-gbar / gnorm), info

    frame = ReducedFrame(gbar)
    k = frame.m - 1
    lam = config.regularization
    h = curvature_vector(frame, oracle.hvp)
    rng = np.random.default_rng(config.seed)

    if config.mode == "direct":
        if n > DIRECT_CAP:
            raise ConfigError(f"direct tangent solve is limited to n <= {DIRECT_CAP}, got {n}")
        obj = cache.objective
        UQ = basis.apply(frame.matrix())
        B = obj.matvec(UQ)
        D = obj.d2psi(cache.z) / obj.T
        H = B.T @ (D[:, None] * B)
        obj.counter.rmatvec += k
        obj.counter.hvp += k
        factor, shift, regularized = _dense_factor(H, lam)
        info["regularized"] = regularized
        info["lambda"] = lam if shift is None else shift

        def inverse(E):
            return _dense_solve(factor, shift, E)

        exact = True if config.exact_trace is None else config.exact_trace
    else:
        matmat = _tangent_matmat(frame, oracle.hvp, lam)
        precond = _jacobi(matmat, k, rng) if config.jacobi else None
        iters = [0]

        def inverse(E):
            X, it, _, brk = cg(matmat, E, config.krylov_tol, config.krylov_maxit, precond)
            iters[0] += it
            info["breakdown"] |= brk
            return X

        exact = (k <= HUTCHINSON_THRESHOLD) if config.exact_trace is None else config.exact_trace

    if cache.objective.c[2] == 0 and cache.objective.c[3] == 0:
        a = np.zeros(k)
    else:
        probes = None if exact else rng.choice([-1.0, 1.0], size=(k, config.probes))
        a = logdet_correction(frame, inverse, oracle.third, probes)
    rhs = h - (gnorm / n) * a

    if config.mode == "direct":
        u = inverse(rhs)
        info["krylov_residual"] = float(
            np.linalg.norm(H @ u + info["lambda"] * u - rhs) / max(np.linalg.norm(rhs), 1e-300)
        ) if shift is not None else 0.0
    else:
        u, it, rel, brk = cg(matmat, rhs, config.krylov_tol, config.krylov_maxit, precond)
        info["krylov_iters"] = it
        info["krylov_trace_iters"] = iters[0]
        info["krylov_residual"] = rel
        info["breakdown"] |= brk
    info["u_norm"] = float(np.linalg.norm(u))
    info["h_norm"] = float(np.linalg.norm(h))
    info["a_norm"] = float(np.linalg.norm(a))
    d_y = frame.apply(u) - frame.nu
    info["d_y"] = d_y
    return basis.apply(d_y), info
