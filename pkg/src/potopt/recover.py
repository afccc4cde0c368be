"""Closed-form recovery of optimal potentials from auxiliary minimizers.

Every recovery returns a ``RecoveredPotential``: the potential as a Field
(hard walls stored as the clamp value), an explicit mask of the nodes where
it is finite, and the family-specific extras (multiplier, contact sets, M).
Integrals over the set of finiteness use the mask, never a threshold on V.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import bisect

from .errors import BracketingFailure, DegenerateContactSet, SignViolation, ZeroMinimizer
from .grid import Field, check_same_grid
from .operators import CLAMP, laplacian

LP = "lp"
INVERSE_LP = "inverse_lp"
EXPONENTIAL = "exponential"


@dataclass
class RecoveredPotential:
    V: Field
    finite: np.ndarray
    family: str
    multiplier: Optional[float] = None
    plus_set: Optional[np.ndarray] = None
    minus_set: Optional[np.ndarray] = None
    M: Optional[float] = None
    budget: float = 1.0

    def constraint_integral(self, p: Optional[float] = None, alpha: Optional[float] = None) -> float:
        """The constrained integral of V over its set of finiteness."""
        w = self.V.grid.weights[self.finite]
        v = self.V.values[self.finite]
        if self.family in (LP, "l1"):
            return float(np.dot(w, v ** (p if p is not None else 1.0)))
        if self.family == INVERSE_LP:
            return float(np.dot(w, v ** (-p)))
        if self.family == EXPONENTIAL:
            return float(np.dot(w, np.exp(-alpha * v)))
        raise ValueError(f"unknown family {self.family!r}")


def _nonzero(u: Field):
    if not np.any(u.values):
        raise ZeroMinimizer("the auxiliary minimizer vanishes identically (f = 0?)")


def recover_lp(u: Field, p: float) -> RecoveredPotential:
    """V_p = (int |u|^q)^{-1/p} |u|^{2/(p-1)}, q = 2p/(p-1)."""
    if not p > 1:
        raise ValueError(f"recover_lp needs p > 1, got {p}")
    _nonzero(u)
    grid = u.grid
    a = np.abs(u.values)
    m = float(a.max())
    q = 2.0 * p / (p - 1.0)
    # scale out the max so large q does not underflow; V is 0-homogeneous in u
    s = a / m
    S = float(np.dot(grid.weights, s ** q))
    V = S ** (-1.0 / p) * s ** (2.0 / (p - 1.0))
    return RecoveredPotential(Field(grid, V), np.ones(grid.n, dtype=bool), LP, multiplier=S ** (-1.0 / p) * m ** (-2.0 / (p - 1.0)))


def contact_sets(u: Field, rtol: float = 1e-9, kappa: Optional[float] = None):
    """Nodes where u = +M and u = -M, M = max |u|.

    The default tolerance is round-off level, appropriate for plateaus of
    an exactly solved sup-norm problem; pass ``kappa`` for an absolute
    threshold on approximate (continuation) iterates.
    """
    M = u.sup
    tol = kappa if kappa is not None else rtol * M
    free = u.grid.free
    return free & (u.values >= M - tol), free & (u.values <= -(M - tol))


def recover_l1(u: Field, f: Field, rtol: float = 1e-9, kappa: Optional[float] = None,
               sign_tol: float = 1e-10) -> RecoveredPotential:
    """V_1 = (chi_{w+} - chi_{w-}) f / M from the J_1 minimizer u.

    On a nodal plateau the discrete equation reads f + Lap_h u = M V_1, and
    Lap_h u vanishes except at the plateau edges; using the full left-hand
    side keeps int V_1 = 1 exact on the grid (it matters for point sources,
    where the whole plateau is an edge).
    """
    grid = check_same_grid(u, f)
    M = u.sup
    plus, minus = contact_sets(u, rtol, kappa)
    if M == 0.0 or not (plus.any() or minus.any()):
        raise DegenerateContactSet("no contact set: u is flat or zero")
    fs = f.values
    scale = max(float(np.max(np.abs(fs))), 1e-300)
    bad = np.flatnonzero((plus & (fs < -sign_tol * scale)) | (minus & (fs > sign_tol * scale)))
    if bad.size:
        raise SignViolation(f"f has the wrong sign on the contact set at {bad.size} nodes", bad)
    load = fs + laplacian(u).values
    V = np.zeros(grid.n)
    V[plus] = load[plus] / M
    V[minus] = -load[minus] / M
    V = np.maximum(V, 0.0)
    return RecoveredPotential(Field(grid, V), np.ones(grid.n, dtype=bool), "l1", multiplier=M,
                              plus_set=plus, minus_set=minus, M=M)


def contact_identity_residual(rec: RecoveredPotential, f: Field) -> float:
    """int_{w+} f - int_{w-} f - M."""
    w = f.grid.weights
    return float(np.dot(w[rec.plus_set], f.values[rec.plus_set])
                 - np.dot(w[rec.minus_set], f.values[rec.minus_set]) - rec.M)


def _finite_mask(u: Field, threshold: float) -> np.ndarray:
    return np.abs(u.values) > threshold * u.sup


def recover_inverse_lp(u: Field, p: float, budget: float = 1.0, threshold: float = 0.0) -> RecoveredPotential:
    """V = (int |u|^r / m)^{1/p} |u|^{-2/(p+1)}, r = 2p/(p+1); V = inf where u = 0.

    ``threshold`` (relative to max |u|) treats round-off tails as zeros.
    """
    if not p > 0:
        raise ValueError(f"need p > 0, got {p}")
    _nonzero(u)
    grid = u.grid
    fin = _finite_mask(u, threshold)
    a = np.abs(u.values) / u.sup
    r = 2.0 * p / (p + 1.0)
    S = float(np.dot(grid.weights[fin], a[fin] ** r))
    V = np.full(grid.n, CLAMP)
    with np.errstate(over="ignore", divide="ignore"):
        V[fin] = np.minimum((S / budget) ** (1.0 / p) * a[fin] ** (-2.0 / (p + 1.0)), CLAMP)
    fin &= V < CLAMP  # values beyond the clamp are walls as well
    C = (S / budget) ** (1.0 / p) * u.sup ** (2.0 / (p + 1.0))
    return RecoveredPotential(Field(grid, V), fin, INVERSE_LP, multiplier=C, budget=budget)


def recover_exponential(u: Field, alpha: float, threshold: float = 0.0) -> RecoveredPotential:
    """V = (log int u^2 - log u^2) / alpha; V = inf where u = 0."""
    if not alpha > 0:
        raise ValueError(f"need alpha > 0, got {alpha}")
    _nonzero(u)
    grid = u.grid
    fin = _finite_mask(u, threshold)
    a = u.values / u.sup
    S = float(np.dot(grid.weights[fin], a[fin] ** 2))
    V = np.full(grid.n, CLAMP)
    with np.errstate(divide="ignore", under="ignore"):
        V[fin] = np.minimum((math.log(S) - np.log(a[fin] ** 2)) / alpha, CLAMP)
    fin &= V < CLAMP
    return RecoveredPotential(Field(grid, V), fin, EXPONENTIAL, multiplier=1.0 / S)


@dataclass(frozen=True)
class ConstraintSpec:
    """Constraint family int Psi(V) <= 1: V^p (lp), V^{-p} (inverse_lp), exp(-alpha V)."""

    family: str
    p: Optional[float] = None
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.family not in (LP, INVERSE_LP, EXPONENTIAL):
            raise ValueError(f"unknown constraint family {self.family!r}")
        if self.family == EXPONENTIAL:
            if self.alpha is None or not self.alpha > 0:
                raise ValueError("exponential constraint needs alpha > 0")
        elif self.p is None or not self.p > 0:
            raise ValueError(f"{self.family} constraint needs p > 0")

    def psi(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == LP:
            return x ** self.p
        if self.family == INVERSE_LP:
            return x ** (-self.p)
        return np.exp(-self.alpha * x)

    def dpsi(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == LP:
            return self.p * x ** (self.p - 1.0)
        if self.family == INVERSE_LP:
            return -self.p * x ** (-self.p - 1.0)
        return -self.alpha * np.exp(-self.alpha * x)

    def dpsi_inv(self, y):
        """Inverse of Psi' on its range (negative reals for decreasing Psi)."""
        y = np.asarray(y, dtype=float)
        if self.family == LP:
            return (y / self.p) ** (1.0 / (self.p - 1.0))
        if self.family == INVERSE_LP:
            return (-y / self.p) ** (-1.0 / (self.p + 1.0))
        return -np.log(-y / self.alpha) / self.alpha

    @property
    def decreasing(self) -> bool:
        return self.family != LP


def multiplier_root(spec: ConstraintSpec, u: Field, rtol: float = 1e-12) -> float:
    """Lambda_u < 0 with int_{u != 0} Psi((Psi')^{-1}(Lambda_u u^2)) = 1.

    Solved by bisection in log(-Lambda), after bracketing by doubling.
    """
    if not spec.decreasing:
        raise ValueError("multiplier_root needs a decreasing Psi")
    _nonzero(u)
    grid = u.grid
    nz = u.values != 0
    w = grid.weights[nz]
    u2 = u.values[nz] ** 2

    def excess(logt):
        with np.errstate(divide="ignore", over="ignore", under="ignore"):
            total = float(np.dot(w, spec.psi(spec.dpsi_inv(-math.exp(logt) * u2))))
        return math.log(total) if total > 0 else -math.inf

    lo, hi = -1.0, 1.0
    for _ in range(2000):
        if excess(lo) < 0:
            break
        lo -= 2.0 * abs(lo)
    else:
        raise BracketingFailure("normalization stays above 1 as Lambda -> 0")
    for _ in range(2000):
        if excess(hi) > 0:
            break
        hi += 2.0 * abs(hi)
    else:
        raise BracketingFailure("normalization stays below 1 as Lambda -> -inf")
    if not (math.isfinite(excess(lo)) and math.isfinite(excess(hi))):
        raise BracketingFailure("normalization is not finite at the bracket ends")
    # log t is O(1..100); an absolute tolerance of rtol on it is a relative one on t
    logt = bisect(excess, lo, hi, xtol=rtol, rtol=4 * np.finfo(float).eps, maxiter=10_000)
    return -math.exp(logt)


def recover_from_multiplier(spec: ConstraintSpec, u: Field, lam: Optional[float] = None) -> RecoveredPotential:
    """V = (Psi')^{-1}(Lambda_u u^2), infinite where u = 0."""
    lam = multiplier_root(spec, u) if lam is None else lam
    grid = u.grid
    fin = u.values != 0
    V = np.full(grid.n, CLAMP)
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        V[fin] = np.minimum(spec.dpsi_inv(lam * u.values[fin] ** 2), CLAMP)
    return RecoveredPotential(Field(grid, V), fin, spec.family, multiplier=lam)


def recover(spec: ConstraintSpec, u: Field, f: Optional[Field] = None) -> RecoveredPotential:
    """Dispatch on the constraint family."""
    if spec.family == LP:
        if spec.p == 1:
            if f is None:
                raise ValueError("p = 1 recovery needs the source f")
            return recover_l1(u, f)
        return recover_lp(u, spec.p)
    if spec.family == INVERSE_LP:
        return recover_inverse_lp(u, spec.p)
    return recover_exponential(u, spec.alpha)
