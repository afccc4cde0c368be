"""Verification experiments built on the solvers.

Support and decay diagnostics for the whole-space problems, the p < 1
counterexample, a gamma-convergence demonstration through torsion
functions, the scaling (GNS) stationarity of lambda_1 minimizers and the
two-well construction of a lambda_2 optimal potential.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AllBelowThreshold, OverlappingSupports, UnderResolvedGrid
from .functionals import Lambda1InvP
from .grid import Field, Grid, RADIAL, make_interval, make_radial
from .operators import CLAMP, dirichlet_energy, eigenpairs, energy_of_potential, l2_distance, lambda1, torsion
from .optimize import DescentResult, SolverOptions, minimize_on_sphere
from .recover import recover_inverse_lp

MIN_FIT_POINTS = 20


# ------------------------------------------------------------- support

@dataclass
class SupportReport:
    support_radius: float
    truncation_radius: float
    stable: Optional[bool] = None
    decay_slope: Optional[float] = None
    rerun_radius: Optional[float] = None

    def as_dict(self) -> dict:
        return {"supportRadius": self.support_radius, "truncationRadius": self.truncation_radius,
                "stable": self.stable, "decaySlope": self.decay_slope, "rerunRadius": self.rerun_radius}


def _extent(u: Field, eps_supp: Optional[float]) -> float:
    thr = 1e-8 * u.sup if eps_supp is None else eps_supp
    idx = np.flatnonzero(np.abs(u.values) > thr)
    if idx.size == 0:
        raise AllBelowThreshold(f"no node exceeds the support threshold {thr:.3e}")
    return float(np.max(u.grid.distance_from_center()[idx]))


def fit_decay_slope(u: Field, r_min: float = 2.0, r_max: Optional[float] = None) -> Optional[float]:
    """Least-squares slope of log|u| against log r over [r_min, r_max]."""
    grid = u.grid
    r = grid.distance_from_center()
    r_max = grid.radius / 2.0 if r_max is None else r_max
    a = np.abs(u.values)
    m = (r >= r_min) & (r <= r_max) & (a > 0)
    if m.sum() < MIN_FIT_POINTS:
        return None
    return float(np.polyfit(np.log(r[m]), np.log(a[m]), 1)[0])


def support_radius(u: Field, eps_supp: Optional[float] = None, rerun: Optional[Field] = None) -> SupportReport:
    """Support extent of u, with a stability verdict when a rerun on a
    larger truncation is supplied (stable: the radius moved by < 2h).

    The log-log decay slope is fitted over [2, R/2] whenever the support
    reaches that window, i.e. for tails that are not compactly supported.
    """
    grid = u.grid
    rho = _extent(u, eps_supp)
    rep = SupportReport(rho, grid.radius)
    if rerun is not None:
        rep.rerun_radius = _extent(rerun, None if eps_supp is None else eps_supp)
        rep.stable = abs(rep.rerun_radius - rho) < 2.0 * max(grid.h, rerun.grid.h)
    if rho >= grid.radius / 2.0:
        rep.decay_slope = fit_decay_slope(u)
    return rep


def enlarged(grid: Grid, factor: int = 2) -> Grid:
    """Same spacing, truncation radius (or half-length) multiplied by factor."""
    n = factor * (grid.n - 1) + 1
    if grid.kind == RADIAL:
        return make_radial(factor * grid.upper, grid.d, n)
    c, L = grid.center, factor * grid.radius
    return make_interval(c - L, c + L, n)


def support_experiment(solve: Callable[[Grid], Field], grid: Grid, eps_supp: Optional[float] = None) -> SupportReport:
    """Run ``solve`` on grid and on the doubled truncation, compare supports."""
    u = solve(grid)
    u2 = solve(enlarged(grid))
    return support_radius(u, eps_supp, rerun=u2)


@dataclass
class DecayCheck:
    passed: bool
    fraction: float
    checked: int
    violations: list = field(default_factory=list)


def ode_decay_check(u: Field, p: float, d: int, C_p: Optional[float] = None, lam: float = 0.0,
                    tail_start: float = 1.0, rtol: float = 0.05, eps_supp: Optional[float] = None,
                    required: float = 0.95) -> DecayCheck:
    """Check -v' >= (2 C_p/(s+1))^{1/2} v^{(s+1)/2} on the tail, s = (p-1)/(p+1).

    The squared form v'^2 >= 2 C_p v^{s+1}/(s+1) - lam v^2 is tested with a
    relative slack rtol, at midpoints of consecutive tail nodes, using
    one-sided differences.  lam is the eigenvalue for lambda_1 problems (0
    for energy problems).  C_p defaults to (int |u|^r)^{1/p}, the
    multiplier of the unit-budget problem computed from u itself.
    """
    if d != u.grid.d and u.grid.kind == RADIAL:
        raise ValueError(f"field lives in dimension {u.grid.d}, not {d}")
    grid = u.grid
    s = (p - 1.0) / (p + 1.0)
    r = 2.0 * p / (p + 1.0)
    if C_p is None:
        C_p = float(np.dot(grid.weights, np.abs(u.values) ** r)) ** (1.0 / p)
    x = grid.distance_from_center()
    order = np.argsort(x, kind="stable")
    x, v = x[order], np.abs(u.values[order])
    thr = 1e-8 * max(v.max(), 1e-300) if eps_supp is None else eps_supp
    xm = 0.5 * (x[:-1] + x[1:])
    vm = 0.5 * (v[:-1] + v[1:])
    dx = np.diff(x)
    ok = dx > 0
    slope = np.zeros_like(vm)
    slope[ok] = -np.diff(v)[ok] / dx[ok]
    tail = ok & (xm >= tail_start) & (v[:-1] > thr) & (v[1:] > thr)
    if not tail.any():
        return DecayCheck(True, 1.0, 0)
    rhs = 2.0 * C_p / (s + 1.0) * vm ** (s + 1.0) - lam * vm ** 2
    good = (slope >= 0) & (slope ** 2 >= (1.0 - rtol) * rhs)
    idx = np.flatnonzero(tail)
    bad = idx[~good[idx]]
    frac = 1.0 - bad.size / idx.size
    return DecayCheck(frac >= required, frac, int(idx.size), [float(xm[i]) for i in bad])


# ------------------------------------------------------- counterexample

@dataclass
class CounterexampleReport:
    n: int
    j: int
    p: float
    energy: float
    wall_energy: float
    limit_energy: float
    grid_nodes: int


def counterexample_potential(grid: Grid, n: int, j: int, p: float) -> Field:
    """C_n j^{1/p} on the n-1 windows |x - k/n| <= 1/j, with int V^p = 1 on the grid."""
    x = grid.nodes
    chi = np.zeros(grid.n, dtype=bool)
    tol = 1e-9 * grid.h
    for k in range(1, n):
        chi |= np.abs(x - k / n) <= 1.0 / j + tol
    mass = float(np.dot(grid.weights, chi.astype(float)))
    # C_n fixed so the discrete constraint is saturated exactly
    height = (1.0 / mass) ** (1.0 / p)
    return Field(grid, np.where(chi, height, 0.0))


def wall_potential(grid: Grid, n: int) -> Field:
    """Hard walls (clamp value) at x = k/n, k = 1..n-1."""
    V = np.zeros(grid.n)
    for k in range(1, n):
        V[int(round(k / n / grid.h))] = CLAMP
    return Field(grid, V)


def counterexample_energy(n: int, j: int, p: float = 0.5, grid_nodes: Optional[int] = None) -> CounterexampleReport:
    """Energies of V_j^n and of the limit walls on (0, 1) with f = 1."""
    if n < 2 or j < 1:
        raise ValueError("need n >= 2 cells and j >= 1")
    if not 0 < p < 1:
        raise ValueError("the counterexample concerns 0 < p < 1")
    need = 20 * j * n
    cells = grid_nodes - 1 if grid_nodes is not None else need
    # nodes at every k/n for the walls
    cells = int(math.ceil(cells / n)) * n
    if cells < need:
        raise UnderResolvedGrid(f"{cells + 1} nodes cannot resolve windows of width 1/j = {1 / j:g} for n = {n}")
    grid = make_interval(0.0, 1.0, cells + 1)
    f = grid.field(1.0)
    E = energy_of_potential(counterexample_potential(grid, n, j, p), f)
    E_wall = energy_of_potential(wall_potential(grid, n), f)
    return CounterexampleReport(n, j, p, E, E_wall, -1.0 / (24.0 * n * n), grid.n)


# ------------------------------------------------------------ gamma

def gamma_distance(V: Field, W: Field) -> float:
    """d_gamma(V, W) = ||w_V - w_W||_{L2} with w the torsion functions."""
    return l2_distance(torsion(V), torsion(W))


def gamma_convergence_demo(Vseq: Sequence[Field], Vlimit: Field) -> list[float]:
    wl = torsion(Vlimit)
    return [l2_distance(torsion(V), wl) for V in Vseq]


# ------------------------------------------------------------- GNS

def _gns_parts(u: Field, p: float):
    r = 2.0 * p / (p + 1.0)
    A = dirichlet_energy(u)
    B = float(np.dot(u.grid.weights, np.abs(u.values) ** r)) ** ((p + 1.0) / p)
    return A, B


def gns_stationarity(u: Field, p: float, d: int) -> float:
    """|g'(1)| / g(1) for g(t) = t^2 A + t^{-d/p} B (dilations preserving int u^2)."""
    A, B = _gns_parts(u, p)
    return abs(2.0 * A - d / p * B) / (A + B)


def gns_ratio(u: Field, p: float, d: int) -> float:
    """||u||_2 / (||grad u||_2^{d/(d+2p)} ||u||_r^{2p/(d+2p)}); at a lambda_1
    minimizer this is the best constant of the interpolation inequality."""
    r = 2.0 * p / (p + 1.0)
    w = u.grid.weights
    l2 = math.sqrt(float(np.dot(w, u.values ** 2)))
    grad = math.sqrt(dirichlet_energy(u))
    lr = float(np.dot(w, np.abs(u.values) ** r)) ** (1.0 / r)
    return l2 / (grad ** (d / (d + 2.0 * p)) * lr ** (2.0 * p / (d + 2.0 * p)))


# ---------------------------------------------------- lambda_1 solves

@dataclass
class Lambda1Run:
    u: Field
    V: Field
    finite: np.ndarray
    lam: float
    result: DescentResult


def solve_lambda1(grid: Grid, p: float, budget: float = 1.0, opts: Optional[SolverOptions] = None,
                  width: Optional[float] = None) -> Lambda1Run:
    """Optimal lambda_1 potential under int V^{-p} <= budget on the grid."""
    kind = Lambda1InvP(p=p, budget=budget)
    x = grid.distance_from_center()
    width = width or max(grid.radius / 4.0, 3.0 * grid.h)
    res = minimize_on_sphere(kind, grid.field(np.exp(-(x / width) ** 2)), opts)
    rec = recover_inverse_lp(res.u, p, budget=budget)
    return Lambda1Run(res.u, rec.V, rec.finite, res.value, res)


def budget_scaling_lambda1(p: float, d: int, budgets: Sequence[float], grid: Optional[Grid] = None,
                           opts: Optional[SolverOptions] = None) -> list[float]:
    """lambda_1(m) from one unit-budget solve and the dilation law
    lambda_1(m) = lambda_1(1) m^{-2/(2p+d)} (V_m(x) = t^2 V(t x))."""
    if any(not m > 0 for m in budgets):
        raise ValueError("budgets must be positive")
    grid = grid or make_radial(6.0, d, 1201)
    lam1 = solve_lambda1(grid, p, 1.0, opts).lam
    return [lam1 * m ** (-2.0 / (2.0 * p + d)) for m in budgets]


@dataclass
class TwoWellReport:
    V: Field
    eigenvalues: np.ndarray
    eigenfunctions: list
    single_well: float
    budget_each: float
    separation: float

    @property
    def double_gap(self) -> float:
        """|lambda_2 - lambda_1| / lambda_2."""
        return abs(self.eigenvalues[1] - self.eigenvalues[0]) / self.eigenvalues[1]

    @property
    def single_gap(self) -> float:
        return abs(self.eigenvalues[1] - self.single_well) / self.single_well


def place_wells(well: Field, finite: np.ndarray, separation: float) -> Field:
    """min(V_1, V_2) on one long interval: two translated copies of ``well``,
    whose sets of finiteness are ``separation`` apart (rounded to nodes)."""
    g = well.grid
    idx = np.flatnonzero(finite)
    lo, hi = int(idx.min()), int(idx.max())
    gap = int(round(separation / g.h))
    if gap < 2:
        raise OverlappingSupports(f"separation {separation:g} is below 2h = {2 * g.h:g}")
    shift = (hi - lo) + gap
    n = g.n + shift
    long = make_interval(g.lower, g.lower + (n - 1) * g.h, n)
    V1 = np.full(n, CLAMP)
    V2 = np.full(n, CLAMP)
    V1[: g.n] = well.values
    V2[shift: shift + g.n] = well.values
    if np.any((V1 < CLAMP) & (V2 < CLAMP)):
        raise OverlappingSupports("the two sets of finiteness intersect")
    return Field(long, np.minimum(V1, V2))


def lambda2_two_ball(p: float, d: int = 1, half_width: float = 4.0, n: int = 801,
                     separation: float = 1.0, opts: Optional[SolverOptions] = None) -> TwoWellReport:
    """lambda_2 of two disjoint half-budget lambda_1-optimal wells on a line.

    The single well is solved on (-half_width, half_width); both copies live
    on one long grid and a single eigensolve returns the double eigenvalue.
    """
    if d != 1:
        raise ValueError("two wells are placed on a line; only d = 1 is supported")
    grid = make_interval(-half_width, half_width, n)
    run = solve_lambda1(grid, p, 0.5, opts)
    V = place_wells(run.V, run.finite, separation)
    spec = eigenpairs(V, 2)
    single = lambda1(run.V)
    return TwoWellReport(V, spec.eigenvalues, spec.eigenfunctions, single, 0.5, separation)
