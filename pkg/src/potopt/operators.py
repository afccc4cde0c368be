"""Discrete Schrodinger operator -Laplacian + V with Dirichlet conditions.

The Laplacian is assembled in conservative form: a symmetric stiffness
matrix K built from interface measures, divided by the diagonal quadrature
weights W.  On interval grids and for d <= 3 on radial grids this coincides
with the usual central differences; at r = 0 it gives 2d (u0 - u1) / h^2.
Linear solves work with the symmetric system (K + W V) u = W f restricted
to the free nodes, so they are exact up to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded, solveh_banded

from .errors import NegativePotential, NoConvergence, SingularSystem
from .grid import Field, Grid, check_same_grid, integrate

CLAMP = 1e12  # finite stand-in for V = +inf


def clamp_potential(values) -> np.ndarray:
    v = np.array(values, dtype=float)
    v[np.isnan(v)] = CLAMP
    return np.minimum(v, CLAMP)


def stiffness_bands(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and super-diagonal of K over all nodes."""
    c = grid.edge_coefficients / grid.h
    diag = np.zeros(grid.n)
    diag[:-1] += c
    diag[1:] += c
    return diag, -c


def stiffness_matvec(grid: Grid, u: np.ndarray) -> np.ndarray:
    c = grid.edge_coefficients / grid.h
    du = np.diff(u)
    out = np.zeros_like(u)
    out[:-1] -= c * du
    out[1:] += c * du
    return out


def dirichlet_energy(u: Field) -> float:
    """Discrete version of the integral of |grad u|^2."""
    g = u.grid
    return float(np.sum(g.edge_coefficients * np.diff(u.values) ** 2) / g.h)


def apply_operator(V: Field, u: Field) -> Field:
    grid = check_same_grid(V, u)
    out = stiffness_matvec(grid, u.values) / grid.weights + clamp_potential(V.values) * u.values
    out[~grid.free] = 0.0
    return Field(grid, out)


def laplacian(u: Field) -> Field:
    """Discrete Laplacian (zero on Dirichlet nodes)."""
    grid = u.grid
    out = -stiffness_matvec(grid, u.values) / grid.weights
    out[~grid.free] = 0.0
    return Field(grid, out)


def _upper_bands(grid: Grid, V: np.ndarray, shift: np.ndarray | float = 0.0) -> np.ndarray:
    """(K + W V - shift W) on free nodes in LAPACK upper banded storage."""
    free = grid.free
    diag, sup = stiffness_bands(grid)
    w = grid.weights[free]
    ab = np.zeros((2, int(free.sum())))
    ab[1] = diag[free] + w * (V[free] - shift)
    ab[0, 1:] = sup[free[:-1] & free[1:]]
    return ab


def solve_system(grid: Grid, V: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve (K + W V) u = rhs on the free nodes; rhs is a nodal load vector."""
    ab = _upper_bands(grid, V)
    try:
        x = solveh_banded(ab, rhs[grid.free], check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    u = np.zeros(grid.n)
    u[grid.free] = x
    return u


def _check_potential(V: Field) -> np.ndarray:
    v = np.asarray(V.values, dtype=float)
    if np.any(v < 0):
        bad = np.flatnonzero(v < 0)
        raise NegativePotential(f"potential negative at {bad.size} nodes (first {bad[0]})")
    return clamp_potential(v)


def solve_linear(V: Field, f: Field, signed: bool = False) -> Field:
    """Solution of -u'' + V u = f with homogeneous Dirichlet data.

    ``signed`` admits potentials with negative values (the exponential
    family produces them); the solve then fails with SingularSystem if the
    operator is not positive definite.
    """
    grid = check_same_grid(V, f)
    v = clamp_potential(V.values) if signed else _check_potential(V)
    return Field(grid, solve_system(grid, v, grid.weights * f.values))


def energy_of_potential(V: Field, f: Field, signed: bool = False) -> float:
    u = solve_linear(V, f, signed)
    return -0.5 * integrate(f.with_values(f.values * u.values))


def quadratic_energy(V: Field, f: Field, u: Field) -> float:
    """J_V(f, u) = 1/2 |grad u|^2 + 1/2 int V u^2 - int f u."""
    check_same_grid(V, f, u)
    v = clamp_potential(V.values)
    w = u.grid.weights
    return 0.5 * dirichlet_energy(u) + float(np.dot(w, 0.5 * v * u.values ** 2 - f.values * u.values))


def torsion(V: Field) -> Field:
    return solve_linear(V, V.grid.field(1.0))


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenfunctions: list
    residuals: np.ndarray

    def __getitem__(self, k):
        return self.eigenvalues[k], self.eigenfunctions[k]


def _scaled_tridiagonal(grid: Grid, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """W^{-1/2} (K + W V) W^{-1/2} on free nodes as (diagonal, off-diagonal)."""
    free = grid.free
    diag, sup = stiffness_bands(grid)
    w = grid.weights[free]
    s = 1.0 / np.sqrt(w)
    a = diag[free] * s * s + v[free]
    b = sup[free[:-1] & free[1:]] * s[:-1] * s[1:]
    return a, b


def sturm_count(a: np.ndarray, b: np.ndarray, sigma: float) -> int:
    """Number of eigenvalues of the symmetric tridiagonal (a, b) below sigma."""
    count = 0
    tiny = np.finfo(float).tiny ** 0.5
    b2 = (b * b).tolist()
    q = a[0] - sigma
    if q < 0:
        count += 1
    for i, ai in enumerate(a[1:].tolist()):
        if q == 0.0:
            q = tiny
        q = ai - sigma - b2[i] / q
        if q < 0:
            count += 1
    return count


def _bisect_eigenvalue(a, b, k, rtol=1e-9):
    """k-th (0-based) eigenvalue by Sturm bisection."""
    off = np.zeros_like(a)
    off[:-1] += np.abs(b)
    off[1:] += np.abs(b)
    lo, hi = float(np.min(a - off)), float(np.max(a + off))
    while hi - lo > rtol * max(abs(lo), abs(hi), 1e-300):
        mid = 0.5 * (lo + hi)
        if sturm_count(a, b, mid) > k:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _tridiag_matvec(a, b, x):
    y = a * x
    y[:-1] += b * x[1:]
    y[1:] += b * x[:-1]
    return y


def eigenpairs(V: Field, k: int = 1, tol: float = 1e-8, max_iter: int = 10_000, signed: bool = False) -> Spectrum:
    """First k Dirichlet eigenpairs of -Laplacian + V.

    Each eigenvalue is bracketed by Sturm bisection, which supplies the shift
    for inverse iteration; iterates are kept orthogonal to the eigenvectors
    already found, so clustered eigenvalues come out as distinct vectors.
    Eigenfunctions are normalized to unit L2 norm and positive mean.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    grid = V.grid
    v = clamp_potential(V.values) if signed else _check_potential(V)
    a, b = _scaled_tridiagonal(grid, v)
    m = a.size
    if k > m:
        raise ValueError(f"only {m} free nodes, cannot compute {k} eigenpairs")
    rng = np.random.default_rng(12345)
    found: list[np.ndarray] = []
    values, residuals, funcs = [], [], []
    for j in range(k):
        sigma = _bisect_eigenvalue(a, b, j)
        # keep the shifted matrix nonsingular while staying close to sigma
        shift = sigma - 1e-7 * max(abs(sigma), 1.0)
        ab = np.zeros((3, m))
        ab[0, 1:] = b
        ab[1] = a - shift
        ab[2, :-1] = b
        x = rng.standard_normal(m)
        lam, res = sigma, np.inf
        for _ in range(max_iter):
            for y in found:
                x -= np.dot(y, x) * y
            x /= np.linalg.norm(x)
            bx = _tridiag_matvec(a, b, x)
            lam = float(np.dot(x, bx))
            res = float(np.linalg.norm(bx - lam * x))
            if res <= tol * abs(lam):
                break
            x = solve_banded((1, 1), ab, x, check_finite=False)
        else:
            raise NoConvergence(f"eigenpair {j + 1} residual {res:.3e} after {max_iter} iterations")
        found.append(x.copy())
        u = np.zeros(grid.n)
        u[grid.free] = x / np.sqrt(grid.weights[grid.free])
        if np.dot(grid.weights, u) < 0:
            u = -u
        values.append(lam)
        residuals.append(res / max(abs(lam), 1e-300))
        funcs.append(Field(grid, u))
    order = np.argsort(values, kind="stable")
    return Spectrum(np.asarray(values)[order], [funcs[i] for i in order], np.asarray(residuals)[order])


def lambda1(V: Field, signed: bool = False) -> float:
    return float(eigenpairs(V, 1, signed=signed).eigenvalues[0])


def dense_matrix(V: Field) -> tuple[np.ndarray, np.ndarray]:
    """Dense (K + W V, W) on free nodes, for small-grid cross checks."""
    grid = V.grid
    free = grid.free
    diag, sup = stiffness_bands(grid)
    K = np.diag(diag) + np.diag(sup, 1) + np.diag(sup, -1)
    A = K + np.diag(grid.weights * clamp_potential(V.values))
    return A[np.ix_(free, free)], np.diag(grid.weights[free])


def l2_distance(u: Field, v: Field) -> float:
    check_same_grid(u, v)
    return math.sqrt(integrate(u.with_values((u.values - v.values) ** 2)))
