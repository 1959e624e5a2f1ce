"""Quadrature grids on a truncated line and functions sampled on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import GridMismatchError, InvalidArgumentError

SCHEMES = ("trapezoid", "gauss-legendre")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    """Nodes and positive weights discretizing ``dx`` on ``[-L, L]``."""

    half_width: float
    nodes: np.ndarray
    weights: np.ndarray
    scheme: str = "trapezoid"

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes))
        object.__setattr__(self, "weights", _frozen(self.weights))
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise InvalidArgumentError("nodes and weights must be 1-d arrays of equal length")
        if np.any(np.diff(self.nodes) <= 0):
            raise InvalidArgumentError("nodes must be strictly increasing")
        if np.any(self.weights <= 0):
            raise InvalidArgumentError("weights must be positive")

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def spacing(self) -> float:
        """Uniform node spacing (trapezoid grids only)."""
        if self.scheme != "trapezoid":
            raise InvalidArgumentError("spacing is defined for trapezoid grids only")
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def metadata(self) -> dict:
        return {"L": float(self.half_width), "n": int(self.n), "scheme": self.scheme}

    def same_as(self, other: "Grid") -> bool:
        if self is other:
            return True
        return (
            self.scheme == other.scheme
            and self.n == other.n
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.weights, other.weights)
        )

    def sample(self, f: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return GridFunction(self, f(self.nodes))

    def nearest_index(self, y: float) -> int:
        return int(np.argmin(np.abs(self.nodes - y)))


def make_grid(L: float, n: int, scheme: str = "trapezoid") -> Grid:
    if not L > 0:
        raise InvalidArgumentError(f"half width must be positive, got {L}")
    if int(n) != n or n < 2:
        raise InvalidArgumentError(f"need at least 2 nodes, got {n}")
    n = int(n)
    if scheme == "trapezoid":
        nodes = np.linspace(-L, L, n)
        h = 2.0 * L / (n - 1)
        weights = np.full(n, h)
        weights[0] = weights[-1] = 0.5 * h
    elif scheme == "gauss-legendre":
        t, wt = np.polynomial.legendre.leggauss(n)
        nodes, weights = L * t, L * wt
    else:
        raise InvalidArgumentError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return Grid(float(L), nodes, weights, scheme)


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray = field()

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.shape != (self.grid.n,):
            raise GridMismatchError(
                f"expected {self.grid.n} samples, got shape {self.values.shape}"
            )

    def _check(self, other: "GridFunction"):
        if not self.grid.same_as(other.grid):
            raise GridMismatchError("grid functions live on different grids")

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, c * self.values)

    __rmul__ = __mul__

    def inner(self, other: "GridFunction") -> float:
        self._check(other)
        return float(np.sum(self.grid.weights * self.values * other.values))


def integrate(f: GridFunction) -> float:
    return float(np.dot(f.grid.weights, f.values))
