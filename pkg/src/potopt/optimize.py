"""Descent solvers for the auxiliary functionals.

``minimize`` runs a curvature-preconditioned descent with Armijo
backtracking; the preconditioner is the functional's own curvature model
(stiffness + diagonal + rank one), so iteration counts do not grow like
1/h^2 the way plain gradient steps on a finite-difference Laplacian do.

``minimize_on_sphere`` handles the eigenvalue objectives: each step solves
with -Laplacian + V(u), V(u) the potential realizing the penalty term,
which is a preconditioned projected gradient step with unit length.

``minimize_sup_norm`` follows the p -> 1 path of the L^p problems, warm
started, and finishes with an exact solve of the limiting sup-norm problem.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded, solveh_banded
from scipy.optimize import brentq

from .errors import NoConvergence, SingularSystem
from .functionals import Curvature, Functional, J1, JInvP, Jp
from .grid import Field, Grid
from .operators import CLAMP, solve_system, stiffness_bands, stiffness_matvec

log = logging.getLogger(__name__)

DEFAULT_P_SCHEDULE = tuple([2.0] + [1.0 + 2.0 ** -k for k in range(1, 11)])


@dataclass
class SolverOptions:
    max_iter: int = 100_000
    gtol: float = 1e-8
    backtrack: float = 0.5
    armijo: float = 1e-4
    schedule: Optional[Sequence[float]] = None

    def __post_init__(self):
        if not self.gtol > 0:
            raise ValueError("gtol must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if self.schedule is not None:
            s = np.asarray(self.schedule, dtype=float)
            steps = np.diff(s)
            if s.size > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
                raise ValueError("continuation schedule must be strictly monotone")


@dataclass
class DescentResult:
    u: Field
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)
    multiplier: Optional[float] = None  # eigenvalue for sphere problems


def l2_gradient_norm(grid: Grid, g_euclid: np.ndarray) -> float:
    return math.sqrt(float(np.sum(g_euclid[grid.free] ** 2 / grid.weights[grid.free])))


def _curvature_solve(grid: Grid, cur: Curvature, rhs: np.ndarray) -> np.ndarray:
    """Solve (K + diag + gamma z z^T) x = rhs on the free nodes."""
    free = grid.free
    diag, sup = stiffness_bands(grid)
    ab = np.zeros((2, int(free.sum())))
    ab[1] = diag[free] + np.minimum(np.abs(cur.diagonal[free]), CLAMP * grid.weights[free])
    ab[0, 1:] = sup[free[:-1] & free[1:]]
    try:
        x = solveh_banded(ab, rhs[free], check_finite=False)
        if cur.z is not None and cur.gamma != 0.0:
            z = cur.z[free]
            y = solveh_banded(ab, z, check_finite=False)
            denom = 1.0 + cur.gamma * float(np.dot(z, y))
            if denom > 1e-12:
                x = x - y * (cur.gamma * float(np.dot(z, x)) / denom)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    out = np.zeros(grid.n)
    out[free] = x
    return out


def _majorize_minimize(kind: JInvP, u0: Field, opts: SolverOptions) -> DescentResult:
    """Fixed-point iteration u <- solve(-Laplacian + V(u), f) for JInvP.

    The penalty ||u||_r^2, r < 2, is concave as a function of u^2, so its
    tangent plane in u^2 majorizes it and 1/2 int V(u_k) u^2 is a quadratic
    upper model exact at u_k.  Minimizing the model is one linear solve and
    can only lower the objective.  Zero nodes of u0 stay zero when
    epsilon = 0, so the iteration starts from the unpenalized solution.
    """
    grid = u0.grid
    b = grid.weights * kind.f.values
    u = np.array(u0.values, dtype=float)
    if not np.any(u[grid.free]):
        u = solve_system(grid, np.zeros(grid.n), b)
    val = kind.value(Field(grid, u))
    history = [val]
    stalled = 0
    gn = math.inf
    for it in range(opts.max_iter):
        F = Field(grid, u)
        gn = l2_gradient_norm(grid, kind.euclidean_gradient(F))
        if gn <= opts.gtol * (1.0 + abs(val)):
            return DescentResult(F, val, gn, it, True, history)
        new = solve_system(grid, kind.potential(F), b)
        nv = kind.value(Field(grid, new))
        if val - nv <= 1e-15 * (1.0 + abs(val)):
            # a majorized step can only go up by round-off
            stalled += 1
            if stalled >= 5 or nv > val:
                stalled = 5
                break
        else:
            stalled = 0
        u, val = new, nv
        history.append(val)
    F = Field(grid, u)
    gn = l2_gradient_norm(grid, kind.euclidean_gradient(F))
    # a stalled fixed point counts as converged when the objective can no
    # longer resolve the remaining gradient
    ok = gn <= opts.gtol * (1.0 + abs(val)) or stalled >= 5
    return DescentResult(F, val, gn, len(history) - 1, ok, history)


def minimize(kind: Functional, u0: Field, opts: Optional[SolverOptions] = None) -> DescentResult:
    """Descent with curvature preconditioning and Armijo backtracking.

    JInvP objectives are routed to a majorize-minimize fixed point, which
    handles the near-singular |u|^r term far better than Newton steps.

    Accepted iterates never increase the objective.  The loop stops once
    the L2 gradient norm drops below gtol (1 + |value|), once the Newton
    decrement is at round-off level of the objective, or when no step
    passes the Armijo test (the result is then flagged as not converged
    unless the gradient is already at round-off level).
    """
    opts = opts or SolverOptions()
    if isinstance(kind, JInvP) and kind.f is not None:
        return _majorize_minimize(kind, u0, opts)
    grid = u0.grid
    u = np.array(u0.values, dtype=float)
    u[~grid.free] = 0.0
    val = kind.value(Field(grid, u))
    gn = math.inf
    history = [val]
    for it in range(opts.max_iter):
        F = Field(grid, u)
        g = kind.euclidean_gradient(F)
        gn = l2_gradient_norm(grid, g)
        if gn <= opts.gtol * (1.0 + abs(val)):
            return DescentResult(F, val, gn, it, True, history)
        d = -_curvature_solve(grid, kind.curvature(F), g)
        slope = float(np.dot(g, d))
        if slope < 0 and -slope <= 1e-15 * (1.0 + abs(val)):
            # Newton decrement below what the objective can resolve
            return DescentResult(F, val, gn, it, True, history)
        if not slope < 0:
            d = np.where(grid.free, -g / grid.weights, 0.0)
            slope = float(np.dot(g, d))
        t = 1.0
        while True:
            trial = u + t * d
            tv = kind.value(Field(grid, trial))
            if tv <= val + opts.armijo * t * slope:
                break
            t *= opts.backtrack
            if t < 1e-14:
                trial = None
                break
        if trial is None:
            # no acceptable step: stationary up to round-off or stuck
            ok = -slope <= 1e-13 * (1.0 + abs(val))
            return DescentResult(F, val, gn, it, ok, history)
        u, val = trial, tv
        history.append(val)
    F = Field(grid, u)
    gn = l2_gradient_norm(grid, kind.euclidean_gradient(F))
    return DescentResult(F, val, gn, opts.max_iter, gn <= opts.gtol * (1.0 + abs(val)), history)


def support_extent(u: Field, threshold: float) -> float:
    """Largest distance from the grid center of a node with |u| > threshold."""
    idx = np.flatnonzero(np.abs(u.values) > threshold)
    if idx.size == 0:
        return 0.0
    return float(np.max(u.grid.distance_from_center()[idx]))


def minimize_smoothed(kind: JInvP, u0: Field, opts: Optional[SolverOptions] = None,
                      eps0: Optional[float] = None, eps_min: float = 1e-14) -> DescentResult:
    """epsilon-continuation for the singular |u|^r term: solve, divide
    epsilon by 10, warm start, until the support moves by less than h."""
    opts = opts or SolverOptions()
    grid = u0.grid
    scale = kind.f.sup if kind.f is not None else 1.0
    eps = eps0 if eps0 is not None else 1e-6 * max(scale, 1e-300)
    schedule = list(opts.schedule) if opts.schedule is not None else None
    res, prev_extent = None, None
    u = u0
    k = 0
    while True:
        if schedule is not None:
            if k >= len(schedule):
                break
            eps = schedule[k]
        k += 1
        kind.epsilon = eps
        res = minimize(kind, u, opts)
        u = res.u
        extent = support_extent(u, 1e-8 * max(u.sup, 1e-300))
        log.debug("eps=%.3e value=%.12g extent=%.6f", eps, res.value, extent)
        if schedule is None:
            if prev_extent is not None and abs(extent - prev_extent) < grid.h and res.converged:
                break
            if eps <= eps_min:
                break
            eps /= 10.0
        prev_extent = extent
    return res


def minimize_on_sphere(kind: Functional, u0: Field, opts: Optional[SolverOptions] = None) -> DescentResult:
    """Minimize a 2-homogeneous objective over {int u^2 = 1}.

    Step: u <- normalize((K + W (V(u) - s))^{-1} W u) with V(u) the
    potential attached to the penalty and s a shift keeping the matrix
    positive definite.  The objective is checked after every step and the
    step is shortened (convex combination, renormalized) if it went up.
    """
    opts = opts or SolverOptions(gtol=1e-9, max_iter=20_000)
    grid = u0.grid
    w = grid.weights

    def normalize(v):
        v = np.where(grid.free, v, 0.0)
        return v / math.sqrt(float(np.dot(w, v * v)))

    u = normalize(np.array(u0.values, dtype=float))
    val = kind.value(Field(grid, u))
    history = [val]
    res_norm = math.inf
    lam = 2.0 * val
    for it in range(opts.max_iter):
        F = Field(grid, u)
        V = kind.potential(F)
        Au = stiffness_matvec(grid, u) / w + V * u
        lam = float(np.dot(w, Au * u))
        r = np.where(grid.free, Au - lam * u, 0.0)
        res_norm = 2.0 * math.sqrt(float(np.dot(w, r * r)))
        if res_norm <= opts.gtol * (1.0 + abs(val)):
            return DescentResult(F, val, res_norm, it, True, history, multiplier=2.0 * lam)
        shift = min(float(np.min(V[grid.free])), 0.0)
        new = normalize(solve_system(grid, V - shift, w * u))
        t = 1.0
        while True:
            trial = new if t == 1.0 else normalize(u + t * (new - u))
            tv = kind.value(Field(grid, trial))
            if tv <= val + 1e-15 * abs(val):
                break
            t *= opts.backtrack
            if t < 1e-12:
                trial = None
                break
        if trial is None:
            F = Field(grid, u)
            return DescentResult(F, val, res_norm, it, res_norm <= math.sqrt(opts.gtol), history,
                                 multiplier=2.0 * lam)
        u, val = trial, tv
        history.append(val)
    F = Field(grid, u)
    return DescentResult(F, val, res_norm, opts.max_iter, False, history, multiplier=2.0 * lam)


# ---------------------------------------------------------------- sup norm

def _box_qp(grid: Grid, b: np.ndarray, M: float, active0=None, max_iter: Optional[int] = None):
    """min 1/2 u^T K u - b^T u subject to |u_i| <= M, by primal-dual active sets.

    Returns (u, multipliers, upper set, lower set); multipliers are
    b - K u on the active nodes and zero elsewhere.
    """
    free = grid.free
    n = grid.n
    diag, sup = stiffness_bands(grid)
    upper = np.zeros(n, dtype=bool) if active0 is None else active0[0].copy()
    lower = np.zeros(n, dtype=bool) if active0 is None else active0[1].copy()
    c = float(np.max(diag))
    u = np.zeros(n)
    for it in range(max_iter or n + 10):
        act = upper | lower
        inact = free & ~act
        # rows of active nodes become identity rows u_i = +-M
        ab = np.zeros((3, n))
        ab[1] = np.where(inact, diag, 1.0)
        ab[0, 1:] = np.where(inact[:-1], sup, 0.0)   # row i, column i+1
        ab[2, :-1] = np.where(inact[1:], sup, 0.0)   # row i+1, column i
        rhs = np.where(inact, b, 0.0) + M * upper - M * lower
        u = solve_banded((1, 1), ab, rhs, check_finite=False)
        u[~free] = 0.0
        mu = b - stiffness_matvec(grid, u)
        mu[~act] = 0.0
        # ties (mu = 0 with u = +-M) stay inactive, otherwise they can cycle
        tie = 1e-12 * c * max(M, 1e-300)
        new_upper = free & ((mu + c * (u - M)) > tie)
        new_lower = free & ((mu + c * (u + M)) < -tie)
        if np.array_equal(new_upper, upper) and np.array_equal(new_lower, lower):
            break
        upper, lower = new_upper, new_lower
    else:
        if active0 is not None:
            return _box_qp(grid, b, M, None, max_iter)
        raise NoConvergence("active-set iteration did not settle")
    return u, mu, upper, lower


@dataclass
class SupNormResult:
    u: Field
    M: float
    value: float
    plus_set: np.ndarray
    minus_set: np.ndarray
    continuation: list  # (p, M_p, J_p value) along the schedule
    stable: bool
    converged: bool


def solve_sup_norm_exact(f: Field, warm: Optional[Field] = None, xtol: float = 1e-15):
    """Exact minimizer of the discrete J_1 = 1/2|u'|^2 + 1/2 max|u|^2 - int f u.

    For fixed M the inner problem is a box-constrained quadratic program;
    the optimal M solves M = sum of box multipliers, found by Brent's method.
    """
    grid = f.grid
    b = grid.weights * f.values
    if not np.any(b[grid.free]):
        z = np.zeros(grid.n, dtype=bool)
        return np.zeros(grid.n), 0.0, z, z
    u_free = solve_system(grid, np.zeros(grid.n), b)
    m_hi = float(np.max(np.abs(u_free)))
    state = {}

    def phi_prime(M):
        act = state.get("act")
        u, mu, up, lo = _box_qp(grid, b, M, act)
        state["act"] = (up, lo)
        state[M] = (u, mu, up, lo)
        return M - float(np.sum(np.abs(mu)))

    if warm is not None:
        Mw = warm.sup
        state["act"] = (grid.free & (warm.values >= Mw * (1 - 1e-3)),
                        grid.free & (warm.values <= -Mw * (1 - 1e-3)))
    M = brentq(phi_prime, 0.0, m_hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
    u, mu, up, lo = _box_qp(grid, b, M, state.get("act"))
    return u, M, up, lo


def minimize_sup_norm(f: Field, opts: Optional[SolverOptions] = None, polish: bool = True) -> SupNormResult:
    """Minimizer of J_1 via the p -> 1 path of the J_p problems.

    Each J_p is solved by ``minimize`` warm started from the previous p.
    With ``polish`` the final iterate seeds an exact solve of the limit
    problem, whose contact sets are then exact plateaus of the discrete
    solution.
    """
    opts = opts or SolverOptions()
    schedule = list(opts.schedule) if opts.schedule is not None else list(DEFAULT_P_SCHEDULE)
    grid = f.grid
    u = grid.zeros()
    path = []
    ok = True
    for p in schedule:
        res = minimize(Jp(p, f), u, opts)
        ok = ok and res.converged
        u = res.u
        path.append((p, u.sup, res.value))
        log.debug("p=%.6f M=%.10f J=%.12g it=%d", p, u.sup, res.value, res.iterations)
    stable = len(path) >= 2 and abs(path[-1][1] - path[-2][1]) <= 1e-3 * max(path[-1][1], 1e-300)
    J = J1(f)
    if polish:
        vals, M, up, lo = solve_sup_norm_exact(f, warm=u)
        u = Field(grid, vals)
        ok = True
    else:
        M = u.sup
        up = grid.free & (u.values >= M * (1 - 1e-9))
        lo = grid.free & (u.values <= -M * (1 - 1e-9))
    return SupNormResult(u, float(M), J.value(u), up, lo, path, stable, ok)


def _project_linf_epigraph(u: np.ndarray, M: float) -> tuple[np.ndarray, float]:
    """Euclidean projection of (u, M) onto {(x, t): max |x_i| <= t}."""
    a = np.sort(np.abs(u))[::-1]
    if a.size == 0 or a[0] <= M:
        return u, M
    # t = M + sum_i (a_i - t)_+ is piecewise linear in t; scan the breakpoints
    csum = np.cumsum(a)
    k = np.arange(1, a.size + 1)
    t = (M + csum) / (k + 1)
    nxt = np.append(a[1:], -np.inf)
    j = int(np.flatnonzero((t >= nxt) & (t <= a))[0])
    t = max(float(t[j]), 0.0)
    return np.clip(u, -t, t), t


def direct_sup_norm_oracle(f: Field, iterations: int = 50_000) -> Field:
    """Direct solver for J_1 without continuation (slow, for cross checks only).

    J_1 is rewritten as the smooth problem 1/2 u'Ku + 1/2 M^2 - b'u over the
    convex cone max |u_i| <= M and solved by accelerated projected gradient.
    """
    grid = f.grid
    free = grid.free
    b = grid.weights * f.values
    diag, _ = stiffness_bands(grid)
    step = 1.0 / max(2.0 * float(np.max(diag)), 1.0)  # Gershgorin bound on K, and 1 for M
    u = np.zeros(grid.n)
    M = 0.0
    yu, yM, t = u.copy(), M, 1.0
    for _ in range(iterations):
        gu = stiffness_matvec(grid, yu) - b
        gu[~free] = 0.0
        un, Mn = _project_linf_epigraph(yu - step * gu, yM - step * yM)
        tn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        yu = un + (t - 1.0) / tn * (un - u)
        yM = Mn + (t - 1.0) / tn * (Mn - M)
        u, M, t = un, Mn, tn
    u[~free] = 0.0
    return Field(grid, u)
