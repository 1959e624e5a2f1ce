"""Lower-triangular times orthogonal factorization of group elements.

A group element ``g = I + K`` is written ``g = b_minus o b_plus^{-1}`` with
``b_minus`` lower triangular and ``b_plus`` orthogonal.  Two routes produce
``b_minus`` from ``I + S = g o g^*``:

* ``cholesky_factor`` -- the Cholesky factor of the symmetrized matrix;
* ``fredholm_factor`` -- one restricted second-kind equation per cutoff node,
  solved densely or through ``det2`` and the first minor, followed by the
  projection ``b_minus = I + Pi_-(S + S o C_plus)``.

On a grid the lower factor carries a free positive diagonal.  The second
route fixes it by rescaling column ``j`` with ``M_jj^{-1/2}``, where ``M`` is
the assembled lower-triangular product; with that normalization both routes
return the same factor.

``lax_solution`` solves ``dK/dt = 1/2 [K, Pi_k K]`` by factoring
``exp(-t K0 / 2)`` and conjugating ``K0`` with either factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConditioningError, NotPositiveDefiniteError
from .fredholm import det2, first_minor, restrict_prefix
from .operators import GroupElement, KernelOperator, _expm1_series, check_symmetric

SPD_TOL = 1e-12
CHAIN_THRESHOLD = 30.0


@dataclass(frozen=True, eq=False)
class FactorizationResult:
    b_minus: GroupElement
    b_plus: GroupElement
    t: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def orthogonality_defect(self) -> float:
        return self.diagnostics["orthogonality_defect"]

    @property
    def reconstruction_defect(self) -> float:
        return self.diagnostics["reconstruction_defect"]


@dataclass(frozen=True, eq=False)
class CPlusFamily:
    """Columns ``C_plus(., y_j)`` of the per-cutoff equations, nodes ``x < y_j``.

    ``kernel`` is strictly upper triangular.  ``normalization[j]`` is the
    positive-diagonal rescaling applied to column ``j`` of the lower factor.
    """

    kernel: KernelOperator
    normalization: np.ndarray

    def column(self, j: int) -> np.ndarray:
        return self.kernel.values[:j, j]


def _sym_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def _cholesky_sym(A: np.ndarray, min_eig: float | None = None) -> np.ndarray:
    if min_eig is None:
        min_eig = float(np.linalg.eigvalsh(A)[0]) if A.size else 1.0
    if min_eig <= SPD_TOL:
        raise NotPositiveDefiniteError(
            f"I + S is not positive definite (smallest eigenvalue {min_eig:.3e})",
            smallest_eigenvalue=min_eig,
        )
    return np.linalg.cholesky(A)


def cholesky_factor(S: KernelOperator, min_eig: float | None = None) -> GroupElement:
    """``b_minus`` with ``I + S = b_minus o b_minus^*`` and positive diagonal."""
    check_symmetric(S, 1e-10)
    A = np.eye(S.grid.n) + _sym_part(S.sym)
    return GroupElement.from_sym(S.grid, _cholesky_sym(A, min_eig))


def _cplus_column(S: KernelOperator, A: np.ndarray, j: int, use_minor: bool) -> np.ndarray:
    s = S.sym[:j, j]
    if j == 0:
        return s[:0]
    if not use_minor:
        return -np.linalg.solve(A[:j, :j], s)
    R = restrict_prefix(S, j)
    Sj = R.operator
    d = det2(Sj, "spectral").value
    D = first_minor(Sj).sym
    return -s - D @ s / d


def fredholm_factor(S: KernelOperator, use_minor: bool = False) -> tuple[CPlusFamily, GroupElement]:
    """Per-cutoff route to the lower factor of ``I + S``.

    For each node ``y_j`` solve ``C(x, y) + int_{x' < y} S(x, x') C(x', y) dx'
    = -S(x, y)`` on the nodes below ``y_j``.  ``use_minor`` evaluates the
    solution as ``-S - D2(S|) S / det2(I + S|)`` instead of a dense solve.
    """
    n = S.grid.n
    Ssym = S.sym
    A = np.eye(n) + Ssym
    C = np.zeros((n, n))
    for j in range(n):
        try:
            C[:j, j] = _cplus_column(S, A, j, use_minor)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(
                f"restricted system singular at y = {S.grid.nodes[j]}", y=float(S.grid.nodes[j])
            ) from exc
    M = np.eye(n) + np.tril(Ssym + Ssym @ C)
    diag = np.diag(M).copy()
    if np.any(diag <= 0):
        bad = int(np.argmin(diag))
        raise NotPositiveDefiniteError(
            f"nonpositive pivot at y = {S.grid.nodes[bad]}", y=float(S.grid.nodes[bad])
        )
    norm = 1.0 / np.sqrt(diag)
    family = CPlusFamily(KernelOperator.from_sym(S.grid, C), norm)
    return family, GroupElement.from_sym(S.grid, M * norm[None, :])


def _spectrum(K0: KernelOperator):
    """``(symmetric?, eigenvalues of the symmetric part)``, used for conditioning."""
    return K0.is_symmetric(), np.linalg.eigvalsh(_sym_part(K0.sym))


def _spread(lam: np.ndarray) -> float:
    return float(lam[-1] - lam[0]) if lam.size else 0.0


def _check_conditioning(t: float, spread: float):
    exponent = abs(t) * spread
    if exponent > np.log(1.0 / np.finfo(float).eps):
        raise ConditioningError(
            f"exp(-t K0) has condition ~exp({exponent:.1f}); split the time interval "
            "(lax_solution chains automatically)",
            exponent=exponent,
        )


def _gram_minus_identity(K0: KernelOperator, t: float) -> tuple[np.ndarray, np.ndarray, float | None]:
    """``g g^* - I`` in symmetrized coordinates for ``g = exp(-t K0 / 2)``.

    Returns the matrix, the symmetrized ``g`` and the smallest eigenvalue of
    ``g g^*`` when it is known in closed form (else ``None``).

    The exponential is built from matrix products (scaling and squaring), not
    from eigenvectors: a row of ``K0`` that is tiny because the momentum is
    tiny there stays tiny *relative to itself* through products, so kernel
    tails keep full relative accuracy down to the underflow threshold.
    """
    symmetric, lam = _spectrum(K0)
    _check_conditioning(t, _spread(lam))
    n = K0.grid.n
    X = _expm1_series(-0.5 * t * K0.sym)
    if symmetric:
        X = _sym_part(X)
        # g g^* - I = (I + X)^2 - I
        S = 2.0 * X + X @ X
        min_eig = float(np.exp(-t * lam[-1])) if lam.size else 1.0
        return _sym_part(S), np.eye(n) + X, min_eig
    S = X + X.T + X @ X.T
    return _sym_part(S), np.eye(n) + X, None


def lower_factor(K0: KernelOperator, t: float) -> np.ndarray:
    """Symmetrized ``b_minus(t)`` alone (no orthogonal factor, no diagnostics)."""
    if t == 0:
        return np.eye(K0.grid.n)
    S, _, min_eig = _gram_minus_identity(K0, t)
    return _cholesky_sym(np.eye(K0.grid.n) + S, min_eig)


def factor_exp(K0: KernelOperator, t: float) -> FactorizationResult:
    """Factor ``exp(-t K0 / 2) = b_minus o b_plus^{-1}``.

    Nonsymmetric ``K0`` is handled through ``exp(-t K0/2) o exp(-t K0^*/2)``.
    """
    grid = K0.grid
    n = grid.n
    if t == 0:
        ident = GroupElement.identity(grid)
        return FactorizationResult(
            ident, ident, 0.0, {"orthogonality_defect": 0.0, "reconstruction_defect": 0.0}
        )
    S, g, min_eig = _gram_minus_identity(K0, t)
    L = _cholesky_sym(np.eye(n) + S, min_eig)
    bp = np.linalg.solve(g, L)
    ortho = float(np.max(np.abs(bp.T @ bp - np.eye(n))))
    recon = float(np.max(np.abs(L @ np.linalg.inv(bp) - g)))
    return FactorizationResult(
        GroupElement.from_sym(grid, L),
        GroupElement.from_sym(grid, bp),
        float(t),
        {"orthogonality_defect": ortho, "reconstruction_defect": recon},
    )


@dataclass(frozen=True, eq=False)
class LaxSolution:
    kernel: KernelOperator
    via_plus: KernelOperator
    conjugation_defect: float
    steps: int
    factorizations: tuple = ()


def _conjugate(K0: KernelOperator, fac: FactorizationResult) -> tuple[np.ndarray, np.ndarray]:
    A = K0.sym
    L = fac.b_minus.sym
    Q = fac.b_plus.sym
    via_minus = solve_triangular(L, A @ L, lower=True)
    via_plus = np.linalg.solve(Q, A @ Q)
    return via_minus, via_plus


def chain_steps(K0: KernelOperator, t: float, threshold: float = CHAIN_THRESHOLD) -> int:
    _, lam = _spectrum(K0)
    return max(1, int(np.ceil(abs(t) * _spread(lam) / threshold)))


def lax_solve(
    K0: KernelOperator, t: float, threshold: float = CHAIN_THRESHOLD, both: bool = True
) -> LaxSolution:
    """``K(t) = b_minus^{-1} o K0 o b_minus``, chained in steps when ``exp(-t K0)``
    would be too ill-conditioned to factor in one go.

    With ``both`` the conjugation by ``b_plus`` is computed as well and the
    largest difference is reported; without it only the lower factor is formed.
    """
    if t == 0:
        return LaxSolution(K0, K0, 0.0, 0, ())
    steps = chain_steps(K0, t, threshold)
    dt = t / steps
    K = K0
    defect = 0.0
    facs = []
    vp = None
    for _ in range(steps):
        if both:
            fac = factor_exp(K, dt)
            vm, vp = _conjugate(K, fac)
            defect = max(defect, float(np.max(np.abs(vm - vp))))
            facs.append(fac)
        else:
            L = lower_factor(K, dt)
            vm = solve_triangular(L, K.sym @ L, lower=True)
        K = KernelOperator.from_sym(K0.grid, vm)
    plus = KernelOperator.from_sym(K0.grid, vp) if vp is not None else K
    return LaxSolution(K, plus, defect if both else float("nan"), steps, tuple(facs))


def lax_solution(K0: KernelOperator, t: float) -> KernelOperator:
    return lax_solve(K0, t, both=False).kernel


def lax_solution_kernel(K0: KernelOperator, t: float, use_minor: bool = False) -> KernelOperator:
    """Evolved kernel assembled term by term from ``S(t)``, ``C_plus`` and the
    projected lower factor (no Cholesky, no eigen-conjugation).

    ``K(t) = (I + C_plus^*) o K0 o (I + B_minus)``, followed by the
    positive-diagonal normalization of the lower factor.
    """
    grid = K0.grid
    if t == 0:
        return K0
    S, _, _ = _gram_minus_identity(K0, t)
    Sop = KernelOperator.from_sym(grid, S)
    family, _ = fredholm_factor(Sop, use_minor=use_minor)
    w = grid.weights
    Sk = Sop.values
    Ck = family.kernel.values
    K = K0.values
    # B_minus(x, y) = (S(x, y) + int S(x, z) C_plus(z, y) dz) for y <= x
    B = np.tril(Sk + Sk @ (w[:, None] * Ck))
    # first two terms: K(xi, eta) + int C_plus(zeta, xi) K(zeta, eta) dzeta
    K1 = K + Ck.T @ (w[:, None] * K)
    # remaining term: int_{zeta2 >= eta} K1(xi, zeta2) B_minus(zeta2, eta) dzeta2
    Kt = K1 + K1 @ (w[:, None] * B)
    d = family.normalization
    return KernelOperator(grid, d[:, None] * Kt * d[None, :])


