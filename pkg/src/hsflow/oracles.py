"""Reference computations the factorization pipeline is checked against.

None of these call into the factorization code: the particle ODEs are
integrated directly, the Lax equation is time-stepped from its right side,
and the spectral cross-check solves a differential eigenproblem.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import eigh

from .errors import InvalidArgumentError, StabilityError, StepRejectedError
from .grid import Grid, GridFunction
from .operators import KernelOperator, lax_rhs

MODES = ("continuum-quadrature", "finite-peakon")
STABILITY_LIMIT = 0.1


def peakon_grid(N: int) -> Grid:
    """Label grid for ``N`` peakons: nodes ``0..N-1``, unit weights."""
    if N < 1:
        raise InvalidArgumentError("need at least one peakon")
    return Grid(float(N), np.arange(N, dtype=float), np.ones(N), "peakon")


@dataclass(frozen=True, eq=False)
class ParticleState:
    t: float
    q: np.ndarray
    p: np.ndarray
    grid: Grid
    mode: str = "continuum-quadrature"
    permutation: tuple = ()

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights

    @classmethod
    def continuum(cls, grid: Grid, q, p, t: float = 0.0) -> "ParticleState":
        return cls(float(t), np.asarray(q, float), np.asarray(p, float), grid, "continuum-quadrature")

    @classmethod
    def peakons(cls, q, p, t: float = 0.0) -> "ParticleState":
        """Finite peakon data.  Unordered positions are sorted; the sorting
        permutation is kept so results can be mapped back."""
        q = np.asarray(q, float)
        p = np.asarray(p, float)
        if q.shape != p.shape or q.ndim != 1:
            raise InvalidArgumentError("positions and momenta must be 1-d arrays of equal length")
        order = np.argsort(q, kind="stable")
        if np.any(np.diff(q[order]) == 0):
            raise InvalidArgumentError("peakon positions must be distinct")
        return cls(float(t), q[order], p[order], peakon_grid(q.size), "finite-peakon", tuple(int(i) for i in order))

    def with_values(self, t, q, p) -> "ParticleState":
        return ParticleState(float(t), q, p, self.grid, self.mode, self.permutation)

    def total_momentum(self) -> float:
        return float(np.dot(self.weights, self.p))

    def hamiltonian(self) -> float:
        wp = self.weights * self.p
        return float(0.25 * wp @ np.exp(-np.abs(self.q[:, None] - self.q[None, :])) @ wp)


def particle_rhs(q: np.ndarray, p: np.ndarray, w: np.ndarray):
    """Right sides of the Lagrangian system with ``sgn(0) = 0``.

    ``dq_i/dt = 1/2 sum_j w_j e^{-|q_i - q_j|} p_j``
    ``dp_i/dt = 1/2 p_i sum_j w_j sgn(i - j) e^{-|q_i - q_j|} p_j``
    """
    E = np.exp(-np.abs(q[:, None] - q[None, :]))
    wp = w * p
    idx = np.arange(q.size)
    sgn = np.sign(idx[:, None] - idx[None, :])
    return 0.5 * E @ wp, 0.5 * p * ((sgn * E) @ wp)


def _check_step(q, p, t):
    if np.any(p <= 0):
        raise StepRejectedError(f"momentum lost positivity at t = {t:.6g}", t=t)
    if np.any(np.diff(q) <= 0):
        raise StepRejectedError(f"particle order changed at t = {t:.6g}; reduce dt", t=t)


def integrate_particles(
    state0: ParticleState, dt: float, T: float, times: Sequence[float] | None = None
) -> list[ParticleState]:
    """Classical RK4 on the particle system; one state per requested time."""
    if dt <= 0:
        raise InvalidArgumentError("dt must be positive")
    if np.any(state0.p <= 0):
        raise InvalidArgumentError("momenta must be positive")
    targets = sorted(float(s) for s in (times if times is not None else [T]))
    if targets and (targets[0] < state0.t or targets[-1] > state0.t + T + 1e-12):
        raise InvalidArgumentError("requested times outside the integration window")
    w = state0.weights
    q, p, t = state0.q.copy(), state0.p.copy(), state0.t
    out = []
    for target in targets:
        steps = int(np.ceil((target - t) / dt - 1e-9)) if target > t else 0
        if steps:
            h = (target - t) / steps
        for k in range(steps):
            a1, b1 = particle_rhs(q, p, w)
            a2, b2 = particle_rhs(q + 0.5 * h * a1, p + 0.5 * h * b1, w)
            a3, b3 = particle_rhs(q + 0.5 * h * a2, p + 0.5 * h * b2, w)
            a4, b4 = particle_rhs(q + h * a3, p + h * b3, w)
            q = q + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
            p = p + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
            _check_step(q, p, t + (k + 1) * h)
        t = target
        out.append(state0.with_values(t, q.copy(), p.copy()))
    return out


def kernel_from_particles(state: ParticleState) -> KernelOperator:
    """``K(xi, eta) = 1/2 exp(-|q - q'|/2) sqrt(p p')`` on the state's grid."""
    q, s = state.q, np.sqrt(state.p)
    V = 0.5 * np.exp(-0.5 * np.abs(q[:, None] - q[None, :])) * np.outer(s, s)
    np.fill_diagonal(V, 0.5 * state.p)
    return KernelOperator(state.grid, V)


def gamma_map(q: GridFunction, p: GridFunction) -> KernelOperator:
    """``gamma(xi, eta) = l+(min) l-(max)`` with ``l(+/-) = sqrt(2p) e^{+/- q/2}``.

    Evaluated as ``2 exp(-|q - q'|/2) sqrt(p p')`` so large ``|q|`` cannot
    overflow.
    """
    qv, s = q.values, np.sqrt(p.values)
    G = 2.0 * np.exp(-0.5 * np.abs(qv[:, None] - qv[None, :])) * np.outer(s, s)
    np.fill_diagonal(G, 2.0 * p.values)
    return KernelOperator(q.grid, G)


def lax_step_evolve(
    K0: KernelOperator,
    dt: float,
    T: float,
    symmetric: bool = True,
    times: Sequence[float] | None = None,
) -> list[KernelOperator]:
    """RK4 on ``dK/dt = lax_rhs(K)``; returns the kernels at the requested times."""
    if dt <= 0:
        raise InvalidArgumentError("dt must be positive")
    norm = K0.hs_norm()
    if norm * dt > STABILITY_LIMIT:
        raise StabilityError(
            f"||K0|| dt = {norm * dt:.3g} exceeds {STABILITY_LIMIT}; reduce dt",
            product=norm * dt,
        )
    targets = sorted(float(s) for s in (times if times is not None else [T]))
    K = K0
    t = 0.0
    out = []

    def f(A):
        return lax_rhs(A, symmetric=symmetric)

    for target in targets:
        steps = int(np.ceil((target - t) / dt - 1e-9)) if target > t else 0
        if steps:
            h = (target - t) / steps
        for _ in range(steps):
            k1 = f(K)
            k2 = f(K + (0.5 * h) * k1)
            k3 = f(K + (0.5 * h) * k2)
            k4 = f(K + h * k3)
            K = K + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if symmetric:
                K = KernelOperator(K.grid, 0.5 * (K.values + K.values.T))
        t = target
        out.append(K)
    return out


def sturm_liouville_operators(m: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    """Stiffness ``A`` of ``1/4 - d^2/dx^2`` with ``f' = -/+ f/2`` at ``+/-L``
    and lumped mass ``B = diag(w m)``, on a uniform grid."""
    g = m.grid
    if g.scheme != "trapezoid":
        raise InvalidArgumentError("Sturm-Liouville discretization needs a uniform grid")
    n, h = g.n, g.spacing
    A = np.diag(0.25 * g.weights)
    A += (np.diag(np.r_[1.0, np.full(n - 2, 2.0), 1.0]) - np.eye(n, k=1) - np.eye(n, k=-1)) / h
    A[0, 0] += 0.5
    A[-1, -1] += 0.5
    return A, np.diag(g.weights * m.values)


def sturm_liouville_spectrum(m: GridFunction, count: int) -> np.ndarray:
    """Lowest ``count`` eigenvalues of ``(1/4 - f'') = lam m f``.

    Solved as ``B f = mu A f`` and inverted, ``lam = 1/mu``: ``A`` is well
    conditioned while ``B`` degenerates wherever ``m`` underflows.
    """
    if np.any(m.values <= 0):
        raise InvalidArgumentError("m must be positive")
    if not 1 <= count <= m.grid.n:
        raise InvalidArgumentError(f"count must be in 1..{m.grid.n}")
    A, B = sturm_liouville_operators(m)
    n = m.grid.n
    mu = eigh(B, A, eigvals_only=True, subset_by_index=[n - count, n - 1])
    return np.sort(1.0 / mu[::-1])
