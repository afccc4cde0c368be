"""Auxiliary functionals whose minimizers encode the optimal potentials.

Every functional exposes ``value(u)``, ``euclidean_gradient(u)`` (partial
derivatives of the discrete functional with respect to nodal values) and
``gradient(u)``, the L2 gradient, i.e. the Euclidean gradient divided by
the quadrature weights.  The directional derivative along a field v is then
``integrate(gradient(u) * v)``.  Smooth kinds also provide a curvature model
used by the descent solvers: a tridiagonal part plus a rank-one correction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GridMismatch
from .grid import Field, Grid
from .operators import CLAMP, dirichlet_energy, stiffness_matvec


@dataclass
class Curvature:
    """Model Hessian K + diag(diagonal) + gamma * z z^T on nodal values."""

    diagonal: np.ndarray
    z: Optional[np.ndarray] = None
    gamma: float = 0.0


def _check(u: Field, f: Optional[Field]):
    if f is not None and f.grid != u.grid:
        raise GridMismatch("source and state live on different grids")


def _safe_power(x: np.ndarray, e: float) -> np.ndarray:
    """x**e for x >= 0 with 0**e -> 0 even for negative e (used where it
    multiplies a vanishing factor)."""
    out = np.zeros_like(x)
    nz = x > 0
    with np.errstate(over="ignore"):
        out[nz] = np.minimum(x[nz] ** e, CLAMP)
    return out


class Functional:
    """Base class; subclasses implement ``_terms``."""

    f: Optional[Field] = None
    gradient_scale = 1.0  # 1/2 |grad u|^2 (energy) or |grad u|^2 (eigenvalue)

    def _nonlinear(self, u: np.ndarray, grid: Grid):
        raise NotImplementedError

    def value(self, u: Field) -> float:
        _check(u, self.f)
        val, _ = self._nonlinear(u.values, u.grid)
        out = 0.5 * self.gradient_scale * dirichlet_energy(u) + val
        if self.f is not None:
            out -= float(np.dot(u.grid.weights, self.f.values * u.values))
        return out

    def euclidean_gradient(self, u: Field) -> np.ndarray:
        _check(u, self.f)
        grid = u.grid
        _, g = self._nonlinear(u.values, grid)
        g = g + self.gradient_scale * stiffness_matvec(grid, u.values)
        if self.f is not None:
            g = g - grid.weights * self.f.values
        g[~grid.free] = 0.0
        return g

    def gradient(self, u: Field) -> Field:
        return Field(u.grid, self.euclidean_gradient(u) / u.grid.weights)

    def curvature(self, u: Field) -> Curvature:
        raise NotImplementedError(f"{type(self).__name__} has no curvature model")

    __call__ = value


@dataclass
class Jp(Functional):
    """1/2 |grad u|^2 + 1/2 ||u||_q^2 - int f u with q = 2p/(p-1), p > 1."""

    p: float
    f: Optional[Field] = None

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"Jp needs p > 1, got {self.p}")

    @property
    def q(self) -> float:
        return 2.0 * self.p / (self.p - 1.0)

    def norm(self, u: np.ndarray, grid: Grid) -> float:
        m = float(np.max(np.abs(u)))
        if m == 0.0:
            return 0.0
        s = float(np.dot(grid.weights, (np.abs(u) / m) ** self.q))
        return m * s ** (1.0 / self.q)

    def _nonlinear(self, u, grid):
        N = self.norm(u, grid)
        if N == 0.0:
            return 0.0, np.zeros_like(u)
        g = grid.weights * (np.abs(u) / N) ** (self.q - 2.0) * u
        return 0.5 * N * N, g

    def curvature(self, u: Field) -> Curvature:
        grid, v = u.grid, u.values
        N = self.norm(v, grid)
        if N == 0.0:
            return Curvature(np.zeros(grid.n))
        ratio = (np.abs(v) / N) ** (self.q - 2.0)
        z = grid.weights * ratio * v
        return Curvature((self.q - 1.0) * grid.weights * ratio, z, (2.0 - self.q) / N ** 2)


@dataclass
class J1(Functional):
    """1/2 |grad u|^2 + 1/2 max|u|^2 - int f u (nonsmooth)."""

    f: Optional[Field] = None

    def _nonlinear(self, u, grid):
        i = int(np.argmax(np.abs(u)))
        M = abs(float(u[i]))
        g = np.zeros_like(u)
        g[i] = M * np.sign(u[i])
        return 0.5 * M * M, g


@dataclass
class _InversePower(Functional):
    """Shared pieces of the ||u||_r^2 term, r = 2p/(p+1), for the V^{-p}
    constraint with budget m: coefficient m^{-1/p}."""

    p: float = 1.0
    epsilon: float = 0.0
    budget: float = 1.0
    coefficient: Optional[float] = None

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError(f"need p > 0, got {self.p}")
        if not self.budget > 0:
            raise ValueError(f"need budget > 0, got {self.budget}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.coefficient is None:
            self.coefficient = self.budget ** (-1.0 / self.p)

    @property
    def r(self) -> float:
        return 2.0 * self.p / (self.p + 1.0)

    def _base(self, u):
        return np.sqrt(u * u + self.epsilon ** 2) if self.epsilon > 0 else np.abs(u)

    def integral(self, u: np.ndarray, grid: Grid) -> float:
        """Smoothed int |u|^r."""
        return float(np.dot(grid.weights, self._base(u) ** self.r))

    def multiplier(self, u: np.ndarray, grid: Grid) -> float:
        """C_p: coefficient of |u|^{r-2} u in the Euler-Lagrange equation."""
        S = self.integral(u, grid)
        return self.coefficient * S ** (1.0 / self.p) if S > 0 else 0.0

    def _psi(self, u):
        """u * base^{r-2}, written as sign(u) |u|^{r-1} when unsmoothed."""
        if self.epsilon > 0:
            return u * self._base(u) ** (self.r - 2.0)
        return np.sign(u) * _safe_power(np.abs(u), self.r - 1.0)

    def potential(self, u: Field) -> np.ndarray:
        """Potential realizing the penalty for this u: C_p |u|^{r-2}."""
        C = self.multiplier(u.values, u.grid)
        if C == 0.0:
            return np.zeros(u.grid.n)
        with np.errstate(divide="ignore", over="ignore"):
            V = C * self._base(u.values) ** (self.r - 2.0)
        return np.minimum(V, CLAMP)

    def _penalty(self, u, grid):
        """(c * S^{2/r}, Euclidean gradient of it)."""
        S = self.integral(u, grid)
        if S == 0.0 or self.coefficient == 0.0:
            return 0.0, np.zeros_like(u)
        C = self.coefficient * S ** (2.0 / self.r - 1.0)
        return self.coefficient * S ** (2.0 / self.r), 2.0 * C * grid.weights * self._psi(u)

    def _penalty_curvature(self, u, grid):
        S = self.integral(u, grid)
        if S == 0.0 or self.coefficient == 0.0:
            return np.zeros_like(u), None, 0.0
        r = self.r
        b = self._base(u)
        C = self.coefficient * S ** (2.0 / r - 1.0)
        # d/du [u b^{r-2}] = b^{r-4} ((r-1) u^2 + eps^2); capped where b = 0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            dpsi = _safe_power(b, r - 4.0) * ((r - 1.0) * u * u + self.epsilon ** 2)
        dpsi = np.minimum(np.nan_to_num(dpsi, nan=CLAMP, posinf=CLAMP), CLAMP)
        z = grid.weights * self._psi(u)
        gamma = 2.0 * self.coefficient * (2.0 - r) * S ** (2.0 / r - 2.0)
        return 2.0 * C * grid.weights * dpsi, z, gamma


@dataclass
class JInvP(_InversePower):
    """1/2 |grad u|^2 + 1/2 m^{-1/p} ||u||_r^2 - int f u  (energy, V^{-p} class)."""

    f: Optional[Field] = None

    def _nonlinear(self, u, grid):
        val, g = self._penalty(u, grid)
        return 0.5 * val, 0.5 * g

    def curvature(self, u: Field) -> Curvature:
        d, z, gamma = self._penalty_curvature(u.values, u.grid)
        return Curvature(0.5 * d, z, 0.5 * gamma)


@dataclass
class Lambda1InvP(_InversePower):
    """|grad u|^2 + m^{-1/p} ||u||_r^2, minimized on the unit L2 sphere."""

    gradient_scale = 2.0

    def _nonlinear(self, u, grid):
        return self._penalty(u, grid)

    def curvature(self, u: Field) -> Curvature:
        d, z, gamma = self._penalty_curvature(u.values, u.grid)
        return Curvature(d, z, gamma)



def exponential_potential(u: np.ndarray, grid: Grid, alpha: float) -> np.ndarray:
    """(1/alpha) (log int u^2 - log u^2), clamped where u = 0."""
    S = float(np.dot(grid.weights, u * u))
    V = np.full_like(u, CLAMP)
    if S == 0.0:
        return V
    nz = u != 0
    V[nz] = (math.log(S) - np.log(u[nz] ** 2)) / alpha
    return np.minimum(V, CLAMP)


@dataclass
class _Exponential(Functional):
    """int u^2 V(u) with V from the exp(-alpha V) constraint."""

    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"need alpha > 0, got {self.alpha}")

    def _term(self, u, grid):
        w = grid.weights
        u2 = u * u
        S = float(np.dot(w, u2))
        if S == 0.0:
            return 0.0, np.zeros_like(u)
        logs = np.zeros_like(u)
        nz = u2 > 0
        logs[nz] = np.log(u2[nz])
        val = (S * math.log(S) - float(np.dot(w, u2 * logs))) / self.alpha
        grad = 2.0 * w * u * (math.log(S) - logs) / self.alpha
        grad[~nz] = 0.0
        return val, grad

    def _term_curvature(self, u, grid):
        w = grid.weights
        S = float(np.dot(w, u * u))
        if S == 0.0:
            # V(u) is 0-homogeneous and undefined at u = 0: use the bare operator
            return np.zeros_like(u), None, 0.0
        V = exponential_potential(u, grid, self.alpha)
        return 2.0 * w * np.clip(V, 0.0, CLAMP), w * u, 4.0 / (self.alpha * S) if S > 0 else 0.0


@dataclass
class Lambda1Exp(_Exponential):
    gradient_scale = 2.0

    def potential(self, u: Field) -> np.ndarray:
        return exponential_potential(u.values, u.grid, self.alpha)

    def _nonlinear(self, u, grid):
        return self._term(u, grid)

    def curvature(self, u: Field) -> Curvature:
        return Curvature(*self._term_curvature(u.values, u.grid))


@dataclass
class EnergyExp(_Exponential):
    f: Optional[Field] = None

    def __post_init__(self):
        super().__post_init__()
        if self.f is None:
            raise ValueError("EnergyExp needs a source f")

    def _nonlinear(self, u, grid):
        val, g = self._term(u, grid)
        return 0.5 * val, 0.5 * g

    def curvature(self, u: Field) -> Curvature:
        d, z, gamma = self._term_curvature(u.values, u.grid)
        return Curvature(0.5 * d, z, 0.5 * gamma)


def evaluate(kind: Functional, u: Field) -> float:
    return kind.value(u)


def gradient(kind: Functional, u: Field) -> Field:
    return kind.gradient(u)


def check_admissible_q(p: float, d: int, q: float) -> bool:
    """Whether f in L^q gives a well-posed V^{-p} energy problem on R^d."""
    if not p > 0 or d < 1 or not q >= 1:
        return False
    upper = 2.0 * p / (p - 1.0) if p > 1 else math.inf
    if q > upper:
        return False
    if d >= 3:
        return q >= 2.0 * d / (d + 2.0)
    if d == 2:
        return q > 1.0
    return True
