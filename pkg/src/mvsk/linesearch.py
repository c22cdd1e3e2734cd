"""Exact quartic line search and an Armijo fallback.

Along a tangent direction ``d`` with ``w = A d`` the objective is the quartic
``f(x + a d) = a0 + a1 a + a2 a^2 + a3 a^3 + a4 a^4`` whose coefficients are
combinations of the mixed power sums ``s_rs = mean(z^r w^s)``.  Its minimum on
``[0, alpha_max]`` is attained at an endpoint or at a real root of the cubic
derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractViolation
from .oracle import value
from .simplex import alpha_max as _alpha_max

POWER_SUM_INDICES = ((1, 1), (2, 1), (3, 1), (0, 2), (1, 2), (2, 2), (0, 3), (1, 3), (0, 4))


def power_sums(z, w):
    """Mixed sample power sums ``s[(r, s)] = mean(z**r * w**s)`` used by the line model."""
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if z.shape != w.shape:
        raise ValueError(f"shape mismatch {z.shape} vs {w.shape}")
    T = z.size
    zp = [np.ones_like(z), z, z * z, z * z * z]
    wp = [None, w, w * w, w * w * w, (w * w) ** 2]
    return {(r, s): float(zp[r] @ wp[s]) / T for r, s in POWER_SUM_INDICES}


@dataclass
class LineModel:
    coeffs: np.ndarray  # a0..a4, ascending powers
    alpha_max: float
    sums: dict = field(default_factory=dict, repr=False)

    def __call__(self, alpha):
        a = self.coeffs
        alpha = np.asarray(alpha, dtype=np.float64)
        return a[0] + alpha * (a[1] + alpha * (a[2] + alpha * (a[3] + alpha * a[4])))

    def derivative(self, alpha):
        a = self.coeffs
        return a[1] + alpha * (2 * a[2] + alpha * (3 * a[3] + alpha * 4 * a[4]))


def line_model(cache, d, tau=0.0, alpha_cap=None):
    """Quartic model of ``alpha -> f(x + alpha d)`` at the cached iterate.

    One extra pass over ``A`` (for ``w = A d``).  ``alpha_cap`` overrides the
    feasibility cap, e.g. ``1.0`` along a projected segment.
    """
    obj = cache.objective
    d = np.asarray(d, dtype=np.float64)
    dn = np.linalg.norm(d)
    if abs(d.sum()) > 1e-10 * max(dn, np.finfo(float).tiny):
        raise ContractViolation(f"line direction is not tangent (sum = {d.sum():.3e})")
    w = obj.matvec(d)
    s = power_sums(cache.z, w)
    c1, c2, c3, c4 = obj.c
    a = np.array([
        value(cache),
        -c1 * float(obj.mu @ d) + 2 * c2 * s[1, 1] - 3 * c3 * s[2, 1] + 4 * c4 * s[3, 1],
        c2 * s[0, 2] - 3 * c3 * s[1, 2] + 6 * c4 * s[2, 2],
        -c3 * s[0, 3] + 4 * c4 * s[1, 3],
        c4 * s[0, 4],
    ])
    cap = _alpha_max(cache.x, d, tau) if alpha_cap is None else float(alpha_cap)
    return LineModel(coeffs=a, alpha_max=cap, sums=s)


def _cbrt(x):
    return math.copysign(abs(x) ** (1.0 / 3.0), x)


def _cubic_roots(b3, b2, b1, b0):
    # monic depressed cubic t^3 + p t + q with x = t - a/3
    a, b, c = b2 / b3, b1 / b3, b0 / b3
    shift = a / 3.0
    p = b - a * a / 3.0
    q = 2.0 * a ** 3 / 27.0 - a * b / 3.0 + c
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    scale = max(1.0, abs(a), abs(b), abs(c))
    if disc > 0:
        sq = math.sqrt(disc)
        u = _cbrt(-q / 2.0 + sq)
        v = _cbrt(-q / 2.0 - sq)
        roots = [u + v - shift]
        imag = 0.5 * math.sqrt(3.0) * abs(u - v)
        if imag <= 1e-9 * scale:
            roots.append(-(u + v) / 2.0 - shift)
        return roots
    if p == 0:
        return [-shift]
    r = 2.0 * math.sqrt(-p / 3.0)
    arg = max(-1.0, min(1.0, 3.0 * q / (p * r)))
    phi = math.acos(arg) / 3.0
    return [r * math.cos(phi - 2.0 * math.pi * k / 3.0) - shift for k in range(3)]


def real_roots(coeffs):
    """Real roots of the polynomial ``sum(coeffs[i] * t**i)`` of degree <= 3."""
    c = [float(v) for v in coeffs]
    scale = max(abs(v) for v in c) if c else 0.0
    if scale == 0.0:
        return []
    while len(c) > 1 and abs(c[-1]) <= 1e-14 * scale:
        c.pop()
    deg = len(c) - 1
    if deg == 0:
        return []
    if deg == 1:
        return [-c[0] / c[1]]
    if deg == 2:
        c0, c1, c2 = c
        disc = c1 * c1 - 4 * c2 * c0
        if disc < 0:
            if disc >= -1e-12 * scale * scale:
                return [-c1 / (2 * c2)]
            return []
        qq = -0.5 * (c1 + math.copysign(math.sqrt(disc), c1))
        roots = [qq / c2]
        if qq != 0:
            roots.append(c0 / qq)
        return roots
    return _cubic_roots(c[3], c[2], c[1], c[0])


def _polish(model, alpha, steps=2):
    a = model.coeffs
    for _ in range(steps):
        fp = model.derivative(alpha)
        fpp = 2 * a[2] + alpha * (6 * a[3] + alpha * 12 * a[4])
        if fpp == 0:
            break
        trial = alpha - fp / fpp
        if abs(model.derivative(trial)) < abs(fp):
            alpha = trial
        else:
            break
    return alpha


def minimize_line(model):
    """Exact minimiser of the quartic model on ``[0, alpha_max]``.

    Candidates are both endpoints and the real critical points inside the
    interval; ties go to the smallest step.  With ``alpha_max = inf`` the
    model must be bounded below along the ray, otherwise ``(inf, -inf)`` is
    returned.
    """
    amax = max(0.0, float(model.alpha_max))
    if amax == 0.0:
        return 0.0, float(model.coeffs[0])
    a = model.coeffs
    if math.isinf(amax):
        lead = next((c for c in a[:0:-1] if c != 0), 0.0)
        if lead < 0 or (a[4] == 0 and a[3] == 0 and a[2] == 0):
            return math.inf, -math.inf
        cands = [0.0]
    else:
        cands = [0.0, amax]
    for r in real_roots([a[1], 2 * a[2], 3 * a[3], 4 * a[4]]):
        r = _polish(model, r)
        if 0.0 < r < amax:
            cands.append(r)
    cands.sort()
    vals = [float(model(t)) for t in cands]
    best = int(np.argmin(vals))
    return cands[best], vals[best]


def armijo_search(phi, g_dot_d, alpha_init=1.0, sigma=1e-4, shrink=0.5, max_trials=60):
    """Backtracking on ``phi(alpha) <= phi(0) + sigma alpha g_dot_d``.

    Returns ``(alpha, stalled)``; ``stalled`` is true when every one of the
    ``max_trials`` candidates was rejected, in which case ``alpha = 0``.
    """
    if not g_dot_d < 0:
        raise ContractViolation(f"not a descent direction (g.d = {g_dot_d})")
    if not (0 < sigma < 1 and 0 < shrink < 1):
        raise ValueError("sigma and shrink must lie in (0, 1)")
    phi0 = phi(0.0)
    alpha = float(alpha_init)
    for _ in range(max_trials):
        if phi(alpha) <= phi0 + sigma * alpha * g_dot_d:
            return alpha, False
        alpha *= shrink
    return 0.0, True
