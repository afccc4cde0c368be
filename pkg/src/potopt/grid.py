"""Uniform 1D and radial grids, nodal fields and quadrature.

A radial grid discretizes a ball B_R in R^d through the profile u(r) on
[0, R].  Quadrature weights are control-volume measures: node i owns the
shell between r_{i-1/2} and r_{i+1/2} (clipped to [0, R]), so the weights
are strictly positive and sum to the ball volume exactly.  For d = 1 the
radial grid is the half-line [0, R] with a symmetry condition at r = 0, and
the measure is plain dr.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import GridMismatch, InvalidDomain

INTERVAL = "interval"
RADIAL = "radial"


def sphere_measure(d: int) -> float:
    """Surface measure of the unit sphere used by radial grids.

    d = 1 returns 1 because the radial grid then stands for the half-line.
    """
    if d == 1:
        return 1.0
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    kind: str
    lower: float
    upper: float
    n: int
    d: int = 1

    @property
    def h(self) -> float:
        return (self.upper - self.lower) / (self.n - 1)

    @property
    def radius(self) -> float:
        """Truncation radius R (radial grids) or half-length (intervals)."""
        return self.upper if self.kind == RADIAL else 0.5 * (self.upper - self.lower)

    @property
    def is_radial(self) -> bool:
        return self.kind == RADIAL

    @cached_property
    def nodes(self) -> np.ndarray:
        x = self.lower + self.h * np.arange(self.n)
        x[-1] = self.upper
        return _readonly(x)

    @cached_property
    def weights(self) -> np.ndarray:
        h = self.h
        if self.kind == INTERVAL or self.d == 1:
            w = np.full(self.n, h)
            w[0] = w[-1] = 0.5 * h
            return _readonly(w)
        d, r = self.d, self.nodes
        left = np.clip(r - 0.5 * h, 0.0, None)
        right = np.minimum(r + 0.5 * h, self.upper)
        w = sphere_measure(d) / d * (right ** d - left ** d)
        return _readonly(w)

    @cached_property
    def edge_coefficients(self) -> np.ndarray:
        """Interface measure between consecutive nodes (length n - 1)."""
        if self.kind == INTERVAL or self.d == 1:
            return _readonly(np.ones(self.n - 1))
        mid = self.nodes[:-1] + 0.5 * self.h
        return _readonly(sphere_measure(self.d) * mid ** (self.d - 1))

    @cached_property
    def free(self) -> np.ndarray:
        """Mask of unknown nodes; the rest carry homogeneous Dirichlet data."""
        m = np.ones(self.n, dtype=bool)
        if self.kind == INTERVAL:
            m[0] = False
        m[-1] = False
        return _readonly(m)

    @property
    def volume(self) -> float:
        if self.kind == INTERVAL:
            return self.upper - self.lower
        return sphere_measure(self.d) * self.upper ** self.d / self.d

    @property
    def center(self) -> float:
        return 0.0 if self.kind == RADIAL else 0.5 * (self.lower + self.upper)

    def distance_from_center(self) -> np.ndarray:
        return np.abs(self.nodes - self.center)

    def field(self, values) -> "Field":
        """Wrap nodal values (array, scalar or callable of the nodes)."""
        if callable(values):
            values = values(self.nodes)
        arr = np.broadcast_to(np.asarray(values, dtype=float), (self.n,))
        return Field(self, arr)

    def zeros(self) -> "Field":
        return self.field(0.0)

    def refined(self) -> "Grid":
        """Same domain with the spacing halved."""
        return Grid(self.kind, self.lower, self.upper, 2 * self.n - 1, self.d)

    def describe(self) -> dict:
        if self.kind == RADIAL:
            return {"kind": RADIAL, "radius": self.upper, "dimension": self.d, "nodes": self.n}
        return {"kind": INTERVAL, "lower": self.lower, "upper": self.upper, "nodes": self.n}


@dataclass(frozen=True)
class Field:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise GridMismatch(f"expected {self.grid.n} nodal values, got shape {v.shape}")
        object.__setattr__(self, "values", _readonly(v))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.grid.n

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Field":
        return Field(self.grid, fn(self.values))

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def make_interval(a: float, b: float, n: int) -> Grid:
    if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
        raise InvalidDomain(f"need a < b, got ({a}, {b})")
    if int(n) != n or n < 3:
        raise InvalidDomain(f"need n >= 3 nodes, got {n}")
    return Grid(INTERVAL, float(a), float(b), int(n), 1)


def make_radial(R: float, d: int, n: int) -> Grid:
    if not np.isfinite(R) or R <= 0:
        raise InvalidDomain(f"need R > 0, got {R}")
    if int(d) != d or d < 1:
        raise InvalidDomain(f"need integer dimension d >= 1, got {d}")
    if int(n) != n or n < 3:
        raise InvalidDomain(f"need n >= 3 nodes, got {n}")
    return Grid(RADIAL, 0.0, float(R), int(n), int(d))


def check_same_grid(*fields: Field) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatch("fields live on different grids")
    return grid


def integrate(g: Field) -> float:
    """Quadrature of a nodal field over the grid's domain."""
    return float(np.dot(g.grid.weights, g.values))


def inner(u: Field, v: Field) -> float:
    check_same_grid(u, v)
    return float(np.dot(u.grid.weights, u.values * v.values))


def l2_norm(u: Field) -> float:
    return math.sqrt(max(inner(u, u), 0.0))
