"""Outer driver: affine-normal steps with exact quartic line search on Delta(tau).

Each iteration evaluates the oracle on the current face, builds the YAND
direction, picks the exact minimiser of the quartic along it (capped at the
slice boundary) and accepts the result.  When the raw direction leaves the
feasible set before the nominal projected step, the projected segment, the
capped raw step and a projection-arc search compete and the lowest objective
wins (see :func:`boundary_block`).  Faces are handled by pinning coordinates
at ``tau`` and restricting the objective to the free block; a pinned
coordinate is released when its KKT multiplier has the wrong sign and the
face itself is solved well below that violation.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._validation import check_portfolio, check_tau
from .affine_normal import DIRECT_CAP, HUTCHINSON_THRESHOLD, TangentSolveConfig, yand_direction
from .exceptions import ConfigError, DomainError, StationaryPointError
from .instance import PreferenceCoefficients
from .linesearch import armijo_search, line_model, minimize_line
from .oracle import MVSKObjective, gradient, value
from .simplex import (
    PIN_TOL,
    TangentBasis,
    alpha_max,
    kkt_residual_from_gradient,
    project_slice,
    restrict_to_face,
    tangent_residual,
)

STATUSES = ("converged", "stalled", "max_iter", "max_elapsed", "degenerate_face")

# stall trigger: this many consecutive steps with relative decrease below STALL_DECREASE
STALL_WINDOW = 5
STALL_DECREASE = 1e-12
RELEASE_TOL = 1e-10
RELEASE_RATIO = 0.1


@dataclass
class SolverConfig:
    mode: str = "small"
    epsilon: float = 1e-6
    tau: float = 1e-8
    max_iter: int = 300
    max_elapsed_seconds: float | None = None
    projected_trial_step: float = 0.05
    restart_trial_steps: tuple = (0.045, 0.02)
    restart_max_iter: int = 120
    stall_recovery: bool = False
    tangent: TangentSolveConfig = field(default_factory=TangentSolveConfig)
    line_search: str = "exact_quartic"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.tau < 0:
            raise ConfigError("tau must be nonnegative")
        if self.projected_trial_step <= 0:
            raise ConfigError("projected_trial_step must be positive")
        if self.line_search not in ("exact_quartic", "armijo"):
            raise ConfigError(f"unknown line search {self.line_search!r}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")


def preset(mode):
    """Parameter presets for the direct (``"small"``) and PCG (``"large"``) solvers."""
    if mode == "small":
        return SolverConfig(mode="small", max_iter=300,
                            tangent=TangentSolveConfig(mode="direct", regularization=0.0))
    if mode == "large":
        return SolverConfig(
            mode="large", max_iter=40, max_elapsed_seconds=60.0, stall_recovery=True,
            restart_trial_steps=(0.045, 0.02), restart_max_iter=120,
            tangent=TangentSolveConfig(mode="pcg", regularization=1e-4,
                                       krylov_tol=1e-3, krylov_maxit=15),
        )
    raise ConfigError(f"unknown preset {mode!r}; expected 'small' or 'large'")


@dataclass
class SolveReport:
    x_star: np.ndarray
    f_star: float
    kkt_residual: float
    iterations: int
    face_events: int
    restarts: int
    krylov_iters_total: int
    oracle_passes: int
    wall_seconds: float
    status: str
    handoffs: int = 0
    history: list | None = field(default=None, repr=False)

    def to_dict(self, include_history=False):
        out = asdict(self)
        out["x_star"] = [float(v) for v in self.x_star]
        if not include_history:
            out.pop("history")
        return out

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


class _Face:
    def __init__(self, root, x, tau, pinned):
        self.face, self.objective, _ = restrict_to_face(root, x, tau, pinned)
        self.pinned_mask = pinned.copy()
        self.basis = TangentBasis(self.face.dim) if self.face.dim > 1 else None


class _State:
    def __init__(self, root, x, config, record_history):
        self.root = root
        self.config = config
        self.x = x
        self.released = np.zeros(x.size, dtype=bool)
        self.face = None
        self.iterations = 0
        self.face_events = 0
        self.handoffs = 0
        self.krylov = 0
        self.restarts = 0
        self.history = [] if record_history else None
        self.deadline = None


def _snap(x, tau):
    # coordinates within PIN_TOL of the floor land exactly on it; mass goes to the largest
    low = x < tau + PIN_TOL
    if low.any():
        x = x.copy()
        x[low] = tau
        x[np.argmax(x)] += 1.0 - x.sum()
    return x


def _search(cache, d, sub_tau, config, cap=None, model=None):
    if model is None:
        model = line_model(cache, d, sub_tau, alpha_cap=cap)
    if config.line_search == "armijo":
        slope = model.coeffs[1]
        if slope >= 0 or model.alpha_max <= 0:
            return 0.0, model.coeffs[0]
        alpha, _ = armijo_search(model, slope, alpha_init=min(1.0, model.alpha_max))
        return alpha, float(model(alpha))
    return minimize_line(model)


def projected_gradient_step(cache, sub_tau, step, config):
    """Search along ``proj(x - t g) - x`` with ``t`` normalising the trial length to ``step``."""
    x = cache.x
    g = gradient(cache)
    pg = g - g.mean()
    pn = np.linalg.norm(pg)
    if pn == 0:
        return x, 0.0
    dbar = project_slice(x - (step / pn) * g, sub_tau) - x
    dbar -= dbar.mean()  # rounding in the projection leaves a tiny sum
    if np.linalg.norm(dbar) <= 1e-15 or g @ dbar >= 0:
        return x, 0.0
    alpha, _ = _search(cache, dbar, sub_tau, config, cap=1.0)
    return x + alpha * dbar, alpha


def boundary_block(cache, d, sub_tau, step, config):
    """Feasible step along ``d`` from the cached point.

    When ``d`` can travel the nominal length ``step`` inside the slice, this is
    the exact search on ``[0, alpha_max]``.  Otherwise the best of three
    candidates is taken: the search on the projected segment
    ``proj(x + eta d) - x``, the capped raw search, and a backtracking search
    along the projection arc ``t -> proj(x + t d)`` started at the free
    minimiser of the quartic.  The arc candidate pins many blocking
    coordinates in one move.

    Returns ``(x_new, alpha, kind)`` with ``kind`` one of ``"raw"``,
    ``"projected"``, ``"face"`` (the raw step stopped on a new face) or
    ``"arc"``.
    """
    x = cache.x
    g = gradient(cache)
    dn = np.linalg.norm(d)
    eta = step / dn
    amax = alpha_max(x, d, sub_tau)
    if amax >= eta:
        alpha, _ = _search(cache, d, sub_tau, config)
        return x + alpha * d, alpha, "raw"
    dbar = project_slice(x + eta * d, sub_tau) - x
    dbar -= dbar.mean()
    if np.linalg.norm(dbar) <= 1e-15 * max(1.0, dn) or g @ dbar >= 0:
        alpha, _ = _search(cache, d, sub_tau, config)
        return x + alpha * d, alpha, "face"
    alpha, f_proj = _search(cache, dbar, sub_tau, config, cap=1.0)
    best = (f_proj, x + alpha * dbar, alpha, "projected")
    raw = line_model(cache, d, sub_tau, alpha_cap=amax)
    alpha_raw, f_raw = _search(cache, d, sub_tau, config, model=raw)
    if f_raw < best[0]:
        best = (f_raw, x + alpha_raw * d, alpha_raw, "face" if alpha_raw >= amax else "raw")
    t_free, _ = minimize_line(replace(raw, alpha_max=np.inf))
    if amax < t_free < np.inf:
        arc = _arc_search(cache, d, sub_tau, t_free, amax, best[0])
        if arc is not None:
            best = arc
    return best[1], best[2], best[3]


def _arc_search(cache, d, sub_tau, t_start, t_min, f_best, sigma=1e-4, shrink=0.5):
    # Armijo backtracking on proj(x + t d) for t in (t_min, t_start]; the first
    # accepted point is returned only if it beats f_best
    x = cache.x
    g = gradient(cache)
    f0 = value(cache)
    obj = cache.objective
    t = t_start
    while t > t_min:
        xt = project_slice(x + t * d, sub_tau)
        dec = float(g @ (xt - x))
        if dec < 0:
            ft = obj(xt)
            if ft <= f0 + sigma * dec:
                if ft < f_best:
                    return ft, xt, 1.0, "arc"
                return None
        t *= shrink
    return None


def face_continuation(state, tau):
    """Pin every coordinate at the floor (minus released ones) and rebuild the face."""
    x = state.x
    pinned = (x <= tau + PIN_TOL) & ~state.released
    if pinned.all():
        # cannot happen on Delta(tau) with n tau < 1, kept as a guard
        raise DomainError("degenerate face: every coordinate is pinned")
    if state.face is None or not np.array_equal(pinned, state.face.pinned_mask):
        if state.face is not None:
            state.face_events += 1
        state.face = _Face(state.root, x, tau, pinned)
    return state.face


def _release(state, g_full, tau):
    """Pinned coordinates whose multiplier has the wrong sign, and the size of the violation."""
    x = state.x
    at_floor = x <= tau + PIN_TOL
    free = ~at_floor
    lam = g_full[free].mean()
    gap = g_full - lam
    viol = at_floor & (gap < -RELEASE_TOL)
    return viol, float(np.linalg.norm(gap[viol]))


def _iterate(state, step, max_iter):
    config = state.config
    tau = config.tau
    eps = config.epsilon
    recent = []
    zero_steps = 0
    f_last = None
    for _ in range(max_iter):
        if state.deadline is not None and time.perf_counter() > state.deadline:
            return "max_elapsed"
        state.iterations += 1
        try:
            wf = face_continuation(state, tau)
        except DomainError:
            return "degenerate_face"
        mass = wf.face.mass
        sub_tau = wf.face.sub_tau
        x_sub = wf.face.to_sub(state.x)
        cache = wf.objective.cache(x_sub)
        f_cur = value(cache)
        if state.history is not None:
            state.history.append((f_cur, float(state.x.min()), float(state.x.sum())))
        if f_last is not None:
            recent.append((f_last - f_cur) / (1.0 + abs(f_last)))
        f_last = f_cur
        g_sub = gradient(cache)
        face_res = tangent_residual(g_sub) / mass
        released_now = False
        if face_res <= eps or wf.pinned_mask.any():
            g_full = gradient(state.root.cache(state.x))
            if face_res <= eps and kkt_residual_from_gradient(g_full, state.x, tau) <= eps:
                return "converged"
            viol, size = _release(state, g_full, tau)
            # release once the face is solved well below the multiplier violation
            if viol.any() and face_res <= max(eps, RELEASE_RATIO * size):
                state.released = viol
                wf = face_continuation(state, tau)
                mass, sub_tau = wf.face.mass, wf.face.sub_tau
                x_sub = wf.face.to_sub(state.x)
                cache = wf.objective.cache(x_sub)
                released_now = True
        if len(recent) >= STALL_WINDOW and all(r < STALL_DECREASE for r in recent[-STALL_WINDOW:]):
            return "stalled"

        if wf.basis is None:
            alpha = 0.0
            x_new = x_sub
        elif released_now:
            x_new, alpha = projected_gradient_step(cache, sub_tau, step / mass, config)
        else:
            try:
                d, info = yand_direction(cache, wf.basis, config.tangent)
            except StationaryPointError:
                d = None
            if d is None:
                x_new, alpha = x_sub, 0.0
            else:
                state.krylov += info["krylov_iters"] + info.get("krylov_trace_iters", 0)
                x_new, alpha, kind = boundary_block(cache, d, sub_tau, step / mass, config)
                if kind == "face":
                    state.handoffs += 1
            if alpha == 0.0:
                x_new, alpha = projected_gradient_step(cache, sub_tau, step / mass, config)
        if alpha == 0.0:
            zero_steps += 1
            if zero_steps >= 2:
                return "stalled"
            continue
        zero_steps = 0
        state.released[:] = False
        state.x = _snap(wf.face.to_full(x_new), tau)
    return "max_iter"


def solve(panel, coeffs, x0=None, config=None, record_history=False):
    """Minimise the MVSK objective over ``Delta(tau)``.

    Parameters
    ----------
    panel : ReturnPanel
    coeffs : PreferenceCoefficients or sequence of 4 floats
    x0 : array-like, optional
        Feasible start; the equal-weight portfolio by default.
    config : SolverConfig or {"small", "large"}, optional
    record_history : bool
        Keep ``(f, min(x), sum(x))`` for every accepted iterate.

    Returns
    -------
    SolveReport
    """
    if config is None:
        config = preset("small")
    elif isinstance(config, str):
        config = preset(config)
    coeffs = PreferenceCoefficients.coerce(coeffs)
    root = MVSKObjective.from_panel(panel, coeffs)
    n = root.n
    tau = check_tau(config.tau, n)
    if config.tangent.mode == "direct" and n > DIRECT_CAP:
        raise ConfigError(f"direct tangent solve supports n <= {DIRECT_CAP}; use the large preset")
    if config.tangent.mode == "pcg" and config.tangent.exact_trace is None:
        # the trace mode is fixed once per solve from the full dimension, so
        # shrinking faces do not switch a large solve back to exact traces
        exact = n - 1 <= HUTCHINSON_THRESHOLD
        config = replace(config, tangent=replace(config.tangent, exact_trace=exact))
    x = np.full(n, 1.0 / n) if x0 is None else check_portfolio(x0, n, tau).copy()
    start = time.perf_counter()
    state = _State(root, _snap(x, tau) if n > 1 else x, config, record_history)
    restarts = 0
    if n == 1:
        status = "converged"
    else:
        if config.max_elapsed_seconds is not None:
            state.deadline = start + config.max_elapsed_seconds
        status = _iterate(state, config.projected_trial_step, config.max_iter)
        if config.stall_recovery and status in ("stalled", "max_iter"):
            status = stall_recovery(state)
            restarts = state.restarts
    final = root.cache(state.x)
    f_star = value(final)
    kkt = kkt_residual_from_gradient(gradient(final), state.x, tau)
    if status == "converged" and kkt > config.epsilon:
        status = "max_iter"
    if state.history is not None:
        state.history.append((f_star, float(state.x.min()), float(state.x.sum())))
    return SolveReport(
        x_star=state.x, f_star=f_star, kkt_residual=kkt, iterations=state.iterations,
        face_events=state.face_events, restarts=restarts, krylov_iters_total=state.krylov,
        oracle_passes=root.counter.passes, wall_seconds=time.perf_counter() - start,
        status=status, handoffs=state.handoffs, history=state.history,
    )


def stall_recovery(state):
    """Restart from the current iterate with the smaller projected trial steps.

    Face state is cleared before each attempt.  Iterates are monotone, so the
    current point is always the best one seen.
    """
    config = state.config
    state.restarts = 0
    status = "stalled"
    for step in config.restart_trial_steps:
        state.restarts += 1
        state.released[:] = False
        state.face = None
        status = _iterate(state, step, config.restart_max_iter)
        if status in ("converged", "max_elapsed"):
            break
    return status


def with_options(config, **changes):
    """Copy of ``config`` with top-level fields replaced."""
    return replace(config, **changes)
