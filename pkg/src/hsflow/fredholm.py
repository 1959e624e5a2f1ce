"""Regularized determinants, first minors and half-line restrictions.

``det2(I + K) = det((I + K) exp(-K))`` is evaluated either from the
Plemelj-Smithies power-trace series or from the eigenvalues of the
symmetrized matrix.  The first minor ``D2(K) = -K (I + K)^{-1} det2(I + K)``
gives the resolvent ``(I + K)^{-1} = I + D2(K) / det2(I + K)``.

The series coefficients are generated by Newton-identity recursions; the
literal Hessenberg determinants are kept (for small orders) as an
independent check of those recursions.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import ConvergenceError, InvalidArgumentError, SingularityError
from .grid import Grid
from .operators import KernelOperator, exp_op

SERIES_CAP = 30
SERIES_TOL = 1e-14


@dataclass(frozen=True)
class Det2Result:
    value: float
    series_terms: tuple
    truncation_m: int
    method: str
    bound_check: float


def power_traces(K: KernelOperator, m_max: int) -> list[float]:
    """``[tr K^2, ..., tr K^m_max]`` by iterated composition."""
    if m_max < 2:
        raise InvalidArgumentError("m_max must be >= 2")
    A = K.sym
    P = A
    out = []
    for _ in range(2, m_max + 1):
        P = A @ P
        out.append(float(np.trace(P)))
    return out


def plemelj_alpha(sigmas, m_max: int) -> list[float]:
    """Coefficients ``alpha_0..alpha_m_max`` of ``det2(I + zK)`` in powers of z.

    ``sigmas[j - 2] = tr K^j``.  The trace of K itself never enters.
    """
    sig = {j: s for j, s in enumerate(sigmas, start=2)}
    alpha = [1.0, 0.0]
    for m in range(2, m_max + 1):
        acc = 0.0
        for j in range(2, m + 1):
            acc += (-1) ** (j + 1) * sig[j] * alpha[m - j]
        alpha.append(acc / m)
    return alpha[: m_max + 1]


def _alpha_matrix(sigmas, m: int) -> np.ndarray:
    sig = {1: 0.0, **{j: s for j, s in enumerate(sigmas, start=2)}}
    M = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1):
            M[i, j] = sig[i - j + 1]
        if i + 1 < m:
            M[i, i + 1] = m - 1 - i
    return M


def alpha_literal(sigmas, m: int) -> float:
    """``alpha_m`` as ``det(M) / m!`` of the lower-Hessenberg trace matrix (small m)."""
    if m == 0:
        return 1.0
    return float(np.linalg.det(_alpha_matrix(sigmas, m))) / factorial(m)


def beta_literal(K: KernelOperator, m: int) -> np.ndarray:
    """``beta_m`` in symmetrized coordinates, by cofactor expansion down the
    operator-valued first column of the ``(m+1) x (m+1)`` Hessenberg matrix."""
    A = K.sym
    sigmas = power_traces(K, max(m, 2))
    sig = {1: 0.0, **{j: s for j, s in enumerate(sigmas, start=2)}}
    size = m + 1
    S = np.zeros((size, size))  # scalar part; column 0 is a placeholder
    for i in range(size):
        for j in range(1, i + 1):
            S[i, j] = sig[i - j + 1]
        if i + 1 < size:
            S[i, i + 1] = m - i
    out = np.zeros_like(A)
    P = A.copy()
    for i in range(size):
        minor = np.delete(np.delete(S, i, axis=0), 0, axis=1)
        cof = (-1) ** i * (np.linalg.det(minor) if minor.size else 1.0)
        out = out + cof * P
        P = A @ P
    return out / factorial(m)


def _spectral_det2(A: np.ndarray, symmetric: bool) -> float:
    if A.size == 0:
        return 1.0
    lam = np.linalg.eigvalsh(A) if symmetric else np.linalg.eigvals(A)
    one_plus = 1.0 + lam
    if np.any(one_plus == 0):
        return 0.0
    log_mag = np.sum(np.log(np.abs(one_plus)) - np.real(lam))
    phase = np.prod(one_plus / np.abs(one_plus))
    return float(np.real(phase) * np.exp(log_mag))


def det2_bound(K: KernelOperator) -> float:
    """``exp(||(I + K) exp(-K) - I||_1)``, an upper bound for ``|det2(I + K)|``."""
    A = K.sym
    if A.size == 0:
        return 1.0
    E = np.eye(A.shape[0]) + exp_op(K, -1.0).kernel.sym
    R = (np.eye(A.shape[0]) + A) @ E - np.eye(A.shape[0])
    with np.errstate(over="ignore"):
        return float(np.exp(np.sum(np.linalg.svd(R, compute_uv=False))))


def det2(
    K: KernelOperator,
    method: str = "spectral",
    tol: float = SERIES_TOL,
    m_max: int = SERIES_CAP,
) -> Det2Result:
    bound = det2_bound(K)
    if method == "spectral":
        value = _spectral_det2(K.sym, K.is_symmetric())
        return Det2Result(value, (), 0, "spectral", bound)
    if method != "series":
        raise InvalidArgumentError(f"unknown det2 method {method!r}")
    if K.grid.n == 0:
        return Det2Result(1.0, (0.0,), 1, "series", bound)
    alpha = plemelj_alpha(power_traces(K, m_max), m_max)
    value = 1.0
    for m in range(2, m_max + 1):
        value += alpha[m]
        # two small terms in a row: a single one can be an accident of cancellation
        if abs(alpha[m]) <= tol * abs(value) and abs(alpha[m - 1]) <= tol * abs(value):
            return Det2Result(value, tuple(alpha[1 : m + 1]), m, "series", bound)
    raise ConvergenceError(
        f"Plemelj-Smithies series did not reach tolerance {tol:g} in {m_max} terms; "
        "use method='spectral'",
        last_term=abs(alpha[m_max]),
    )


def _check_invertible(A: np.ndarray):
    if A.size == 0:
        return
    cond = np.linalg.cond(np.eye(A.shape[0]) + A)
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        raise SingularityError(f"I + K is numerically singular (condition {cond:.3e})", cond=cond)


def first_minor(K: KernelOperator, mode: str = "direct", tol: float = SERIES_TOL) -> KernelOperator:
    """Kernel of ``D2(K) = -K (I + K)^{-1} det2(I + K)``.

    ``mode="series"`` sums the Plemelj-Smithies expansion instead of solving.
    """
    A = K.sym
    n = A.shape[0]
    _check_invertible(A)
    if mode == "direct":
        d = det2(K, "spectral").value
        # K (I + K)^{-1} = ((I + K)^{-T} K^T)^T
        KR = np.linalg.solve((np.eye(n) + A).T, A.T).T
        return KernelOperator.from_sym(K.grid, -d * KR)
    if mode != "series":
        raise InvalidArgumentError(f"unknown first-minor mode {mode!r}")
    # F(z) = zK(I + zK)^{-1} det2(I + zK) = sum_m B_m z^{m+1},
    # B_0 = K, B_m = alpha_m K - K B_{m-1}; D2(K) = -F(1).
    alpha = plemelj_alpha(power_traces(K, SERIES_CAP), SERIES_CAP)
    B = A.copy()
    total = B.copy()
    for m in range(1, SERIES_CAP + 1):
        B = alpha[m] * A - A @ B
        total = total + B
        if np.max(np.abs(B), initial=0.0) <= tol * max(np.max(np.abs(total)), 1e-300):
            return KernelOperator.from_sym(K.grid, -total)
    raise ConvergenceError("first-minor series did not converge; use mode='direct'")


def inverse_via_minor(K: KernelOperator, check_tol: float = 1e-10) -> KernelOperator:
    """Kernel ``H`` with ``(I + K)(I + H) = I``, assembled from ``D2(K) / det2(I + K)``."""
    res = det2(K, "spectral")
    if abs(res.value) <= 1e-14 * res.bound_check:
        raise SingularityError("det2(I + K) vanishes", det2=res.value)
    D = first_minor(K)
    H = D * (1.0 / res.value)
    n = K.grid.n
    defect = float(np.max(np.abs((np.eye(n) + K.sym) @ (np.eye(n) + H.sym) - np.eye(n)), initial=0.0))
    if defect > check_tol:
        raise SingularityError(f"resolvent check failed (defect {defect:.3e})", defect=defect)
    return H


@dataclass(frozen=True, eq=False)
class RestrictedOperator:
    """``K`` restricted to ``L^2(-inf, y)`` with ``y`` the ``count``-th node."""

    parent: KernelOperator
    count: int

    @property
    def grid(self) -> Grid:
        g = self.parent.grid
        return Grid(g.half_width, g.nodes[: self.count], g.weights[: self.count], g.scheme)

    @property
    def block(self) -> np.ndarray:
        return self.parent.values[: self.count, : self.count]

    @property
    def weights(self) -> np.ndarray:
        return self.parent.grid.weights[: self.count]

    @property
    def operator(self) -> KernelOperator:
        return KernelOperator(self.grid, self.block)

    @property
    def sym(self) -> np.ndarray:
        return self.parent.sym[: self.count, : self.count]


def restrict_prefix(K: KernelOperator, count: int) -> RestrictedOperator:
    if not 0 <= count <= K.grid.n:
        raise InvalidArgumentError(f"prefix length {count} outside 0..{K.grid.n}")
    return RestrictedOperator(K, int(count))


def restrict(K: KernelOperator, y: float, snap: bool = False) -> RestrictedOperator:
    """Restriction to the nodes ``x <= y``; ``y`` must be a node unless ``snap``."""
    g = K.grid
    if not -g.half_width <= y <= g.half_width:
        raise InvalidArgumentError(f"cutoff {y} outside [-{g.half_width}, {g.half_width}]")
    j = g.nearest_index(y)
    if not snap and abs(g.nodes[j] - y) > 1e-12 * max(1.0, g.half_width):
        raise InvalidArgumentError(f"cutoff {y} is not a grid node (nearest {g.nodes[j]})")
    return RestrictedOperator(K, j + 1)
