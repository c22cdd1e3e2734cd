"""Independent oracles, certificates and diagnostics.

Nothing here is used by the solver itself.  The explicit comoment tensors and
the finite-difference checkers recompute the sample oracle by other routes,
the certificate and regularity constants depend on coefficients and panel
norms only, and :func:`projected_gradient_baseline` is a plain first-order
solver used to cross-check optimal values on convex instances.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from ._validation import check_portfolio, check_tau
from .exceptions import DimensionError, DomainError
from .instance import PreferenceCoefficients
from .oracle import MVSKObjective, gradient, hvp, value
from .simplex import TangentBasis, kkt_residual_from_gradient, project_slice
from .solver import SolveReport

TENSOR_CAP = 32
SPECTRUM_CAP = 2048
SVD_CAP = 512


@dataclass(frozen=True)
class ExplicitTensors:
    """Dense covariance, coskewness and cokurtosis of a centered panel."""

    Sigma: np.ndarray
    S: np.ndarray
    K: np.ndarray

    @property
    def n(self):
        return self.Sigma.shape[0]


def build_explicit_tensors(panel):
    """Dense comoment tensors ``(1/T) sum_t a_t^{(x)k}`` for k = 2, 3, 4.

    Raises
    ------
    DimensionError
        If ``n > 32``; the cokurtosis alone has ``n**4`` entries.
    """
    A = np.asarray(panel.A, dtype=np.float64)
    T, n = A.shape
    if n > TENSOR_CAP:
        raise DimensionError(f"explicit tensors are limited to n <= {TENSOR_CAP}, got {n}")
    Sigma = A.T @ A / T
    S = np.einsum("ti,tj,tk->ijk", A, A, A, optimize=True) / T
    K = np.einsum("ti,tj,tk,tl->ijkl", A, A, A, A, optimize=True) / T
    return ExplicitTensors(Sigma=Sigma, S=S, K=K)


def tensor_value_grad(tensors, mu, coeffs, x):
    """Objective and gradient by tensor contraction.

    ``f = -c1 mu'x + c2 <Sigma, x x> - c3 <S, x^3> + c4 <K, x^4>`` and the
    gradient contracts one slot fewer, scaled by the degree.
    """
    c1, c2, c3, c4 = PreferenceCoefficients.coerce(coeffs).as_array()
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    Sx = tensors.Sigma @ x
    Sxx = np.einsum("ijk,j,k->i", tensors.S, x, x)
    Kxxx = np.einsum("ijkl,j,k,l->i", tensors.K, x, x, x)
    f = -c1 * (mu @ x) + c2 * (x @ Sx) - c3 * (x @ Sxx) + c4 * (x @ Kxxx)
    g = -c1 * mu + 2 * c2 * Sx - 3 * c3 * Sxx + 4 * c4 * Kxxx
    return float(f), g


# finite differences -----------------------------------------------------

def _fd_step(x, h):
    return h * (1.0 + np.max(np.abs(x)))


def fd_gradient(fun, x, h=1e-6):
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    step = _fd_step(x, h)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (fun(x + e) - fun(x - e)) / (2 * step)
    return g


def fd_directional(fun, x, v, h=1e-6):
    """Central difference of a (vector-valued) ``fun`` along ``v``."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    step = _fd_step(x, h)
    return (np.asarray(fun(x + step * v)) - np.asarray(fun(x - step * v))) / (2 * step)


def fd_hvp(objective, x, v, h=1e-6):
    """Hessian-vector product as a central difference of gradients."""
    return fd_directional(lambda y: gradient(objective.cache(y)), x, v, h)


def fd_third(objective, x, u, v, h=1e-6):
    """``D^3 f[u, v, .]`` as a central difference of Hessian-vector products."""
    return fd_directional(lambda y: hvp(objective.cache(y), v), x, u, h)


def fd_hessian(objective, x, h=1e-6):
    """Dense Hessian from central differences of the gradient, symmetrised."""
    n = objective.n
    H = np.column_stack([fd_hvp(objective, x, e, h) for e in np.eye(n)])
    return 0.5 * (H + H.T)


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny))


# certificates and constants ---------------------------------------------

def convexity_certificate(coeffs):
    """Coefficient-only convexity test.

    Returns
    -------
    certified : bool
        ``c4 > 0`` and ``8 c2 c4 > 3 c3**2``.  Then ``psi''`` is positive
        everywhere and the objective is convex for every panel.
    margin : float or None
        Global lower bound ``2 c2 - 3 c3**2 / (4 c4)`` of ``psi''``; ``None``
        when ``c4 = 0`` and the bound does not exist.
    """
    _, c2, c3, c4 = PreferenceCoefficients.coerce(coeffs).as_array()
    if c4 <= 0:
        return False, None
    return bool(8 * c2 * c4 - 3 * c3 * c3 > 0), float(2 * c2 - 3 * c3 * c3 / (4 * c4))


def operator_norm(A, tol=1e-8, max_iter=500, seed=0):
    """Largest singular value of ``A`` by power iteration on ``A'A``."""
    A = np.asarray(A, dtype=np.float64)
    if not A.any():
        return 0.0
    v = np.random.default_rng(seed).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
        new = np.sqrt(nrm)
        if abs(new - sigma) <= tol * new:
            sigma = new
            break
        sigma = new
    return float(np.linalg.norm(A @ v))


def curvature_range(coeffs, B):
    """``(min, max)`` of ``psi''(s) = 2c2 - 6c3 s + 12c4 s^2`` on ``[-B, B]``."""
    _, c2, c3, c4 = PreferenceCoefficients.coerce(coeffs).as_array()

    def d2(s):
        return 2 * c2 - 6 * c3 * s + 12 * c4 * s * s

    pts = [-B, B]
    if c4 > 0:
        vertex = c3 / (4 * c4)
        if -B <= vertex <= B:
            pts.append(vertex)
    vals = [d2(s) for s in pts]
    return float(min(vals)), float(max(vals))


@dataclass
class RegularityReport:
    B_tau_bound: float
    A_opnorm: float
    L_tau: float
    M_tau: float
    gamma_lo: float
    gamma_hi: float
    mu_tau: float | None = None
    L_tau_phi: float | None = None
    rho_tau: float | None = None
    kappa_tangent: float | None = None
    pl_available: bool = False
    pl_note: str = ""

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def regularity_constants(panel, coeffs, tau, sigma=1e-4, beta=1.0):
    """Smoothness, Hessian-Lipschitz and structural-PL constants on ``Delta(tau)``.

    ``B`` is bounded by ``||A||_op`` (every ``z_t = a_t' x`` with ``x`` in the
    simplex satisfies ``|z_t| <= ||A||_op``), giving

        L = ||A||^2 / T (2 c2 + 6 c3 B + 12 c4 B^2)
        M = ||A||^3 / T (6 c3 + 24 c4 B)

    The PL constants need ``sigma_min(AU) > 0`` and are computed only when
    ``n <= T`` and ``n <= 512`` (dense SVD); ``sigma`` and ``beta`` are the
    Armijo and direction-bound parameters entering ``rho``.
    """
    A = np.asarray(panel.A, dtype=np.float64)
    T, n = A.shape
    check_tau(tau, n)
    if tau <= 0:
        raise DomainError("tau must be positive for the regularity constants")
    _, c2, c3, c4 = PreferenceCoefficients.coerce(coeffs).as_array()
    nrm = operator_norm(A)
    B = nrm
    L = nrm ** 2 / T * (2 * c2 + 6 * c3 * B + 12 * c4 * B * B)
    M = nrm ** 3 / T * (6 * c3 + 24 * c4 * B)
    g_lo, g_hi = curvature_range(coeffs, B)
    report = RegularityReport(B_tau_bound=B, A_opnorm=nrm, L_tau=float(L), M_tau=float(M),
                              gamma_lo=g_lo, gamma_hi=g_hi)
    if n < 2:
        report.pl_note = "no tangent space"
    elif n > T:
        report.pl_note = "n > T: AU is rank deficient"
    elif n > SVD_CAP:
        report.pl_note = f"skipped: dense SVD limited to n <= {SVD_CAP}"
    else:
        s = np.linalg.svd(TangentBasis(n).apply_t(A.T).T, compute_uv=False)
        if s.min() <= 1e-10:
            report.pl_note = "sigma_min(AU) vanishes"
        elif g_lo <= 0:
            report.pl_note = "psi'' is not positive on [-B, B]"
        else:
            report.kappa_tangent = float(s.max() / s.min())
            report.mu_tau = float(g_lo / T * s.min() ** 2)
            report.L_tau_phi = float(g_hi / T * s.max() ** 2)
            report.rho_tau = float(2 * sigma * (1 - sigma) * report.mu_tau
                                   / (report.L_tau_phi * (1 + beta ** 2)))
            report.pl_available = True
    return report


def reduced_hessian_spectrum(panel, coeffs, x, basis=None):
    """Eigenvalues of ``U' hess f(x) U``.

    Returns
    -------
    eigenvalues : ndarray, ascending
    kappa_plus : float
        Ratio of the largest to the smallest positive eigenvalue (``nan`` if
        none is positive).
    num_negative : int
        Eigenvalues below ``-1e-10`` times the spectral scale.
    """
    obj = MVSKObjective.from_panel(panel, coeffs)
    n = obj.n
    if n > SPECTRUM_CAP:
        raise DimensionError(f"dense spectrum limited to n <= {SPECTRUM_CAP}, got {n}")
    basis = basis or TangentBasis(n)
    cache = obj.cache(np.asarray(x, dtype=np.float64))
    AU = obj.matvec(basis.matrix)
    w = obj.d2psi(cache.z) / obj.T
    H = AU.T @ (w[:, None] * AU)
    eig = np.linalg.eigvalsh(0.5 * (H + H.T))
    scale = max(np.abs(eig).max(), np.finfo(float).tiny) if eig.size else 1.0
    pos = eig[eig > 1e-10 * scale]
    kappa = float(pos.max() / pos.min()) if pos.size else float("nan")
    return eig, kappa, int(np.sum(eig < -1e-10 * scale))


def projected_gradient_baseline(panel, coeffs, x0=None, tau=1e-8, max_iter=5000, tol=1e-8,
                                sigma=1e-4):
    """Projected gradient with Armijo backtracking on ``Delta(tau)``.

    Iterates ``x <- P(x - t g)``, accepting ``t`` once
    ``f(P(x - t g)) <= f(x) + sigma g'(P(x - t g) - x)``, and stops at KKT
    residual ``<= tol``.  Each search starts from a Barzilai-Borwein step.
    """
    coeffs = PreferenceCoefficients.coerce(coeffs)
    obj = MVSKObjective.from_panel(panel, coeffs)
    n = obj.n
    check_tau(tau, n)
    x = np.full(n, 1.0 / n) if x0 is None else check_portfolio(x0, n, tau).copy()
    start = time.perf_counter()
    cache = obj.cache(x)
    g = gradient(cache)
    f = value(cache)
    history = [f]
    t = 1.0
    status = "max_iter"
    it = 0
    while it < max_iter:
        if kkt_residual_from_gradient(g, x, tau) <= tol:
            status = "converged"
            break
        for _ in range(60):
            x_new = project_slice(x - t * g, tau)
            dec = float(g @ (x_new - x))
            new = obj.cache(x_new)
            if dec < 0 and value(new) <= f + sigma * dec:
                break
            t *= 0.5
        else:
            status = "stalled"
            break
        it += 1
        g_new = gradient(new)
        dx, dg = x_new - x, g_new - g
        curv = float(dx @ dg)
        t = min(max(float(dx @ dx) / curv if curv > 0 else 2 * t, 1e-10), 1e6)
        x, cache, g, f = x_new, new, g_new, value(new)
        history.append(f)
    return SolveReport(
        x_star=x, f_star=f, kkt_residual=kkt_residual_from_gradient(g, x, tau),
        iterations=it, face_events=0, restarts=0, krylov_iters_total=0,
        oracle_passes=obj.counter.passes, wall_seconds=time.perf_counter() - start,
        status=status, history=history,
    )


def third_action_dense(tensors, coeffs, x, u, v):
    """``D^3 f(x)[u, v, .]`` from the explicit tensors (small-n oracle)."""
    _, _, c3, c4 = PreferenceCoefficients.coerce(coeffs).as_array()
    return (-6 * c3 * np.einsum("ijk,i,j->k", tensors.S, u, v)
            + 24 * c4 * np.einsum("ijkl,i,j,k->l", tensors.K, u, v, x))
