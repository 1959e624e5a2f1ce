"""Hilbert-Schmidt integral operators discretized on a quadrature grid.

An operator is stored by its raw kernel samples ``K[i, j] = K(x_i, x_j)``.
Quadrature weights enter every algebraic operation, so composition is
``(A o B)[i, j] = sum_k A[i, k] w_k B[k, j]`` and the identity operator has
kernel ``delta_ij / w_i``.

Spectral work (exponentials, eigenvalues, Cholesky) happens in *symmetrized
coordinates* ``D^{1/2} K D^{1/2}`` with ``D = diag(w)``.  In those
coordinates composition is the ordinary matrix product, the adjoint is the
transpose and the identity is the identity matrix, so symmetric kernels stay
symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import AsymmetryError, GridMismatchError, InvalidArgumentError
from .grid import Grid, GridFunction

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class KernelOperator:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        n = self.grid.n
        if v.shape != (n, n):
            raise GridMismatchError(f"kernel shape {v.shape} does not match grid of {n} nodes")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("kernel samples must be finite")

    # -- coordinates -------------------------------------------------------
    @property
    def sym(self) -> np.ndarray:
        """Matrix of the operator in symmetrized coordinates."""
        s = self.grid.sqrt_weights
        return s[:, None] * self.values * s[None, :]

    @classmethod
    def from_sym(cls, grid: Grid, matrix: np.ndarray) -> "KernelOperator":
        s = grid.sqrt_weights
        return cls(grid, np.asarray(matrix) / s[:, None] / s[None, :])

    @classmethod
    def zeros(cls, grid: Grid) -> "KernelOperator":
        return cls(grid, np.zeros((grid.n, grid.n)))

    @classmethod
    def identity(cls, grid: Grid) -> "KernelOperator":
        """Discrete delta kernel; acts as the identity under the weights."""
        return cls(grid, np.diag(1.0 / grid.weights))

    @classmethod
    def from_function(cls, grid: Grid, kernel) -> "KernelOperator":
        x = grid.nodes
        return cls(grid, kernel(x[:, None], x[None, :]))

    @classmethod
    def outer(cls, a: GridFunction, b: GridFunction) -> "KernelOperator":
        """Rank-one kernel ``a(x) b(y)``."""
        _check(a.grid, b.grid)
        return cls(a.grid, np.outer(a.values, b.values))

    # -- linear structure --------------------------------------------------
    def __add__(self, other: "KernelOperator") -> "KernelOperator":
        _check(self.grid, other.grid)
        return KernelOperator(self.grid, self.values + other.values)

    def __sub__(self, other: "KernelOperator") -> "KernelOperator":
        _check(self.grid, other.grid)
        return KernelOperator(self.grid, self.values - other.values)

    def __neg__(self) -> "KernelOperator":
        return KernelOperator(self.grid, -self.values)

    def __mul__(self, c: float) -> "KernelOperator":
        return KernelOperator(self.grid, c * self.values)

    __rmul__ = __mul__

    def __matmul__(self, other: "KernelOperator") -> "KernelOperator":
        return compose(self, other)

    @property
    def T(self) -> "KernelOperator":
        return adjoint(self)

    def is_symmetric(self, tol: float = SYMMETRY_TOL) -> bool:
        v = self.values
        scale = max(1.0, float(np.max(np.abs(v), initial=0.0)))
        return float(np.max(np.abs(v - v.T), initial=0.0)) <= tol * scale

    def trace(self) -> float:
        return float(np.dot(self.grid.weights, np.diag(self.values)))

    def hs_norm(self) -> float:
        return float(np.linalg.norm(self.sym))


@dataclass(frozen=True, eq=False)
class GroupElement:
    """The group element ``I + kernel``."""

    kernel: KernelOperator

    @property
    def grid(self) -> Grid:
        return self.kernel.grid

    @property
    def sym(self) -> np.ndarray:
        return np.eye(self.grid.n) + self.kernel.sym

    @classmethod
    def from_sym(cls, grid: Grid, matrix: np.ndarray) -> "GroupElement":
        return cls(KernelOperator.from_sym(grid, matrix - np.eye(grid.n)))

    @classmethod
    def identity(cls, grid: Grid) -> "GroupElement":
        return cls(KernelOperator.zeros(grid))

    def compose(self, other: "GroupElement") -> "GroupElement":
        # (I + A)(I + B) - I = A + B + A o B
        a, b = self.kernel, other.kernel
        return GroupElement(a + b + compose(a, b))

    def adjoint(self) -> "GroupElement":
        return GroupElement(adjoint(self.kernel))

    def inverse(self) -> "GroupElement":
        return GroupElement.from_sym(self.grid, np.linalg.inv(self.sym))

    def distance_to_identity(self) -> float:
        return float(np.max(np.abs(self.kernel.sym), initial=0.0))


class SplitPair(NamedTuple):
    lower: KernelOperator
    complement: KernelOperator
    tag: str


class Bilinears(NamedTuple):
    trace_A: float
    hs_inner: float
    ad_pairing: float


class DualSplit(NamedTuple):
    l_star: KernelOperator
    k_star: KernelOperator


def _check(g1: Grid, g2: Grid):
    if not g1.same_as(g2):
        raise GridMismatchError("operands live on different grids")


def apply(K: KernelOperator, phi: GridFunction) -> GridFunction:
    _check(K.grid, phi.grid)
    return GridFunction(K.grid, K.values @ (K.grid.weights * phi.values))


def compose(A: KernelOperator, B: KernelOperator) -> KernelOperator:
    _check(A.grid, B.grid)
    return KernelOperator(A.grid, A.values @ (A.grid.weights[:, None] * B.values))


def power(K: KernelOperator, j: int) -> KernelOperator:
    if j < 1:
        raise InvalidArgumentError("operator powers start at 1")
    out = K
    for _ in range(j - 1):
        out = compose(K, out)
    return out


def adjoint(A: KernelOperator) -> KernelOperator:
    return KernelOperator(A.grid, A.values.T)


def commutator(A: KernelOperator, B: KernelOperator) -> KernelOperator:
    return compose(A, B) - compose(B, A)


def bilinears(A: KernelOperator, B: KernelOperator) -> Bilinears:
    _check(A.grid, B.grid)
    w = A.grid.weights
    W = w[:, None] * w[None, :]
    return Bilinears(
        trace_A=A.trace(),
        hs_inner=float(np.sum(W * A.values * B.values)),
        ad_pairing=float(np.sum(W * A.values * B.values.T)),
    )


def ad_pairing(A: KernelOperator, B: KernelOperator) -> float:
    return bilinears(A, B).ad_pairing


def _skew_part(v: np.ndarray) -> np.ndarray:
    upper = np.triu(v, 1)
    return upper - upper.T


def split_lk(A: KernelOperator) -> SplitPair:
    """Lower-triangular plus skew splitting; the diagonal goes to the lower part."""
    comp = _skew_part(A.values)
    return SplitPair(KernelOperator(A.grid, A.values - comp), KernelOperator(A.grid, comp), "lk")


def proj_l(A: KernelOperator) -> KernelOperator:
    return split_lk(A).lower


def proj_k(A: KernelOperator) -> KernelOperator:
    return split_lk(A).complement


def split_lu(A: KernelOperator) -> SplitPair:
    """Lower (with diagonal) plus strictly upper splitting."""
    v = A.values
    return SplitPair(
        KernelOperator(A.grid, np.tril(v)), KernelOperator(A.grid, np.triu(v, 1)), "lu"
    )


def dual_split(A: KernelOperator) -> DualSplit:
    """Duals of the lower/skew projections under the ad-invariant pairing."""
    v = A.values
    strict_lower = np.tril(v - v.T, -1)
    return DualSplit(KernelOperator(A.grid, v - strict_lower), KernelOperator(A.grid, strict_lower))


def r_matrix(A: KernelOperator) -> KernelOperator:
    lower, comp, _ = split_lk(A)
    return lower - comp


def myb_residual(A: KernelOperator, B: KernelOperator) -> float:
    """Max-abs residual of the modified Yang-Baxter identity for ``r_matrix``."""
    RA, RB = r_matrix(A), r_matrix(B)
    res = (
        commutator(RA, RB)
        - r_matrix(commutator(RA, B) + commutator(A, RB))
        + commutator(A, B)
    )
    return float(np.max(np.abs(res.values)))


def check_symmetric(K: KernelOperator, tol: float = SYMMETRY_TOL):
    if not K.is_symmetric(tol):
        defect = float(np.max(np.abs(K.values - K.values.T)))
        raise AsymmetryError(f"kernel is not symmetric (max defect {defect:.3e})", defect=defect)


def lax_rhs(K: KernelOperator, symmetric: bool = True, j: int = 1) -> KernelOperator:
    """Right side ``1/2 [Pi_l(K^j), K]`` of the Lax hierarchy."""
    if j < 1:
        raise InvalidArgumentError("hierarchy index j must be >= 1")
    if symmetric:
        check_symmetric(K)
    return 0.5 * commutator(proj_l(power(K, j)), K)


def _expm1_series(A: np.ndarray) -> np.ndarray:
    """``exp(A) - I`` by scaling, truncated Taylor series and squaring."""
    norm = np.linalg.norm(A, 1)
    squarings = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    B = A / 2.0**squarings
    term = B.copy()
    total = B.copy()
    for k in range(2, 60):
        term = term @ B / k
        total = total + term
        if np.max(np.abs(term)) < 1e-16 * max(np.max(np.abs(total)), 1e-300):
            break
    for _ in range(squarings):
        # (I + X)^2 - I = 2X + X^2
        total = 2.0 * total + total @ total
    return total


def exp_op(K: KernelOperator, scale: float = 1.0) -> GroupElement:
    """Group element ``exp(scale K)``, stored as ``I + kernel``."""
    if scale == 0.0:
        return GroupElement.identity(K.grid)
    A = scale * K.sym
    if K.is_symmetric():
        lam, V = np.linalg.eigh(0.5 * (A + A.T))
        X = (V * np.expm1(lam)) @ V.T
    else:
        X = _expm1_series(A)
    return GroupElement(KernelOperator.from_sym(K.grid, X))
