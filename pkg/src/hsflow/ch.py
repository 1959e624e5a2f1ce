"""Camassa-Holm solver built on the Lax-kernel factorization.

Pipeline: positive momentum profile ``m0`` -> initial kernel
``K0(xi, eta) = 1/2 exp(-|xi - eta|/2) sqrt(m0(xi) m0(eta))`` -> Mercer data
-> ``K(t)`` by factorization -> ``p = 2 diag K(t)``,
``dq/dt = int K(eta, zeta; t)^2 / K(eta, eta; t) dzeta`` -> velocity
``u(x, t) = 1/2 int exp(-|x - q(eta, t)|) p(eta, t) deta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_triangular
from scipy.special import erfc

from .errors import (
    AsymmetryError,
    InvalidArgumentError,
    MonotonicityError,
    PositivityError,
    SingularityError,
    TailMassError,
)
from .factorization import _check_conditioning, lax_solution
from .grid import Grid, GridFunction, integrate
from .operators import KernelOperator

TAIL_MASS_TOL = 1e-12
MERCER_REL_CUTOFF = 1e-14


# -- momentum profiles -------------------------------------------------------

def _gaussian(x, a=1.0, sigma=1.0, x0=0.0):
    return a * np.exp(-(((x - x0) / sigma) ** 2))


def _gaussian_tail(L, a=1.0, sigma=1.0, x0=0.0):
    return 0.5 * a * sigma * np.sqrt(np.pi) * (erfc((L - x0) / sigma) + erfc((L + x0) / sigma))


def _sech2(x, a=1.0, width=1.0, x0=0.0):
    return a / np.cosh((x - x0) / width) ** 2


def _sech2_tail(L, a=1.0, width=1.0, x0=0.0):
    # int_L^inf sech^2((x - x0)/w) dx = w (1 - tanh((L - x0)/w))
    return a * width * ((1 - np.tanh((L - x0) / width)) + (1 - np.tanh((L + x0) / width)))


PROFILES = {"gaussian": (_gaussian, _gaussian_tail), "sech2": (_sech2, _sech2_tail)}


def _terms(spec: dict) -> list[dict]:
    name = spec.get("name")
    if name == "sum":
        out = []
        for term in spec["terms"]:
            out.extend(_terms(term))
        return out
    if name not in PROFILES:
        raise InvalidArgumentError(f"unknown profile {name!r}; expected one of {sorted(PROFILES) + ['sum']}")
    return [spec]


def profile_values(spec: dict, x: np.ndarray) -> np.ndarray:
    total = np.zeros_like(np.asarray(x, dtype=float))
    for term in _terms(spec):
        f, _ = PROFILES[term["name"]]
        params = {k: float(v) for k, v in term.items() if k != "name"}
        total = total + f(x, **params)
    return total


def profile_tail_mass(spec: dict, L: float) -> float:
    """Mass of the profile outside ``[-L, L]``."""
    total = 0.0
    for term in _terms(spec):
        _, tail = PROFILES[term["name"]]
        params = {k: float(v) for k, v in term.items() if k != "name"}
        total += abs(float(tail(L, **params)))
    return total


# -- data types --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InitialData:
    grid: Grid
    m0: GridFunction
    u0: GridFunction
    w0_prime: GridFunction
    K0: KernelOperator
    P: float
    profile: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class SpectralData:
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # shape (r, n), kernel-coordinate samples
    grid: Grid

    @property
    def count(self) -> int:
        return int(self.eigenvalues.size)

    def eigenfunction(self, i: int) -> GridFunction:
        return GridFunction(self.grid, self.eigenfunctions[i])

    @property
    def sym_vectors(self) -> np.ndarray:
        """Orthonormal columns in symmetrized coordinates."""
        return (self.eigenfunctions * self.grid.sqrt_weights[None, :]).T


@dataclass(frozen=True, eq=False)
class CHState:
    t: float
    q: GridFunction
    p: GridFunction
    u: np.ndarray
    x_eval: np.ndarray
    K_t: KernelOperator
    conserved: dict = field(default_factory=dict)


# -- operations --------------------------------------------------------------

def _green_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return 0.5 * np.exp(-np.abs(x[:, None] - y[None, :]))


def green_apply(m: GridFunction) -> GridFunction:
    """``u = (1 - d^2/dx^2)^{-1} m`` by quadrature against ``exp(-|x - y|)/2``."""
    g = m.grid
    return GridFunction(g, _green_matrix(g.nodes, g.nodes) @ (g.weights * m.values))


def initial_kernel(grid: Grid, w0_prime: np.ndarray, m0: np.ndarray | None = None) -> KernelOperator:
    x = grid.nodes
    E = np.exp(-0.5 * np.abs(x[:, None] - x[None, :]))
    V = 0.5 * E * np.outer(w0_prime, w0_prime)
    # diagonal is m0 / 2; write it directly so p(., 0) = m0 holds bit for bit
    np.fill_diagonal(V, 0.5 * np.asarray(w0_prime) ** 2 if m0 is None else 0.5 * m0)
    return KernelOperator(grid, V)


def init_data(profile: dict, grid: Grid, tail_tol: float = TAIL_MASS_TOL) -> InitialData:
    tail = profile_tail_mass(profile, grid.half_width)
    if tail > tail_tol:
        raise TailMassError(
            f"profile mass outside [-L, L] is {tail:.3e} > {tail_tol:.1e}; enlarge L",
            tail_mass=tail,
        )
    m0 = profile_values(profile, grid.nodes)
    if not np.all(m0 > 0):
        bad = int(np.argmin(m0))
        raise PositivityError(
            f"initial momentum must be positive; m0({grid.nodes[bad]:.6g}) = {m0[bad]:.3e}",
            node=float(grid.nodes[bad]),
            value=float(m0[bad]),
        )
    m0f = GridFunction(grid, m0)
    wp = np.sqrt(m0)
    K0 = initial_kernel(grid, wp, m0)
    P = integrate(m0f)
    if abs(K0.trace() - 0.5 * P) > 1e-10 * max(1.0, P):
        raise AssertionError("trace of K0 differs from P/2")
    return InitialData(grid, m0f, green_apply(m0f), GridFunction(grid, wp), K0, P, dict(profile))


def mercer(K0: KernelOperator, cutoff: float = MERCER_REL_CUTOFF) -> SpectralData:
    if not K0.is_symmetric(1e-10):
        raise AsymmetryError("Mercer expansion needs a symmetric kernel")
    A = K0.sym
    lam, V = np.linalg.eigh(0.5 * (A + A.T))
    lam, V = lam[::-1], V[:, ::-1]
    if lam.size and lam[-1] < -1e-10 * max(1.0, lam[0]):
        raise AsymmetryError(f"kernel is not positive semidefinite (eigenvalue {lam[-1]:.3e})")
    keep = lam > cutoff * lam[0] if lam.size and lam[0] > 0 else np.zeros(lam.size, bool)
    phi = (V[:, keep] / K0.grid.sqrt_weights[:, None]).T
    return SpectralData(lam[keep].copy(), phi, K0.grid)


def lower_factor_from_spectrum(spec: SpectralData, t: float) -> np.ndarray:
    """Symmetrized Cholesky factor of ``exp(-t K0)`` rebuilt from Mercer data."""
    _check_conditioning(t, float(spec.eigenvalues[0]) if spec.count else 0.0)
    V = spec.sym_vectors
    n = spec.grid.n
    G = np.eye(n) + (V * np.expm1(-t * spec.eigenvalues)) @ V.T
    return np.linalg.cholesky(0.5 * (G + G.T))


def evolve_kernel(spec: SpectralData, K0: KernelOperator, t: float, b_minus=None) -> KernelOperator:
    """``K(t) = sum_i lam_i e^{-t lam_i} (b_minus^{-1} phi_i) (x) (b_minus^{-1} phi_i)``.

    ``b_minus`` may be a precomputed lower factor (a ``GroupElement``);
    otherwise it is rebuilt from the spectral data.
    """
    if t == 0:
        return K0
    L = b_minus.sym if b_minus is not None else lower_factor_from_spectrum(spec, t)
    psi = solve_triangular(L, spec.sym_vectors, lower=True)
    coef = spec.eigenvalues * np.exp(-t * spec.eigenvalues)
    return KernelOperator.from_sym(K0.grid, (psi * coef) @ psi.T)


def recover_p(K_t: KernelOperator) -> GridFunction:
    p = 2.0 * np.diag(K_t.values)
    if not np.all(p > 0):
        bad = int(np.argmin(p))
        raise PositivityError(
            f"kernel diagonal is not positive at xi = {K_t.grid.nodes[bad]:.6g}",
            node=float(K_t.grid.nodes[bad]),
        )
    return GridFunction(K_t.grid, p)


def q_velocity(K_t: KernelOperator) -> np.ndarray:
    """``int K(eta, zeta)^2 / K(eta, eta) dzeta`` at every node."""
    d = np.diag(K_t.values)
    if not np.all(d > 0):
        bad = int(np.argmin(d))
        raise SingularityError(
            f"kernel diagonal vanishes at xi = {K_t.grid.nodes[bad]:.6g}", node=float(K_t.grid.nodes[bad])
        )
    return (K_t.values**2 @ K_t.grid.weights) / d


class KernelFlow:
    """Evolved kernels ``K(t)`` for one initial kernel, memoized by time.

    The default ``route="factor"`` conjugates by the Cholesky factor of
    ``exp(-t K0)`` built from matrix products, which keeps the kernel's
    exponentially small tails accurate relative to themselves.  ``"mercer"``
    uses the truncated eigen-expansion, which is only accurate in absolute
    terms there.
    """

    def __init__(self, K0: KernelOperator, spec: SpectralData | None = None, route: str = "factor"):
        if route not in ("factor", "mercer"):
            raise InvalidArgumentError(f"unknown route {route!r}")
        self.K0 = K0
        self.route = route
        self._spec = spec
        self._cache: dict[float, KernelOperator] = {}

    @property
    def spec(self) -> SpectralData:
        if self._spec is None:
            self._spec = mercer(self.K0)
        return self._spec

    def __call__(self, t: float) -> KernelOperator:
        t = float(t)
        if t not in self._cache:
            if self.route == "mercer":
                self._cache[t] = evolve_kernel(self.spec, self.K0, t)
            else:
                self._cache[t] = lax_solution(self.K0, t)
        return self._cache[t]


def evolve_q(
    K0: KernelOperator,
    times: Sequence[float],
    dt: float = 0.01,
    flow: KernelFlow | None = None,
    q0=None,
) -> dict[float, GridFunction]:
    """Characteristics ``q(., t)`` at the requested times (classical RK4 in t).

    ``q0`` defaults to the identity ``q(xi, 0) = xi``; finite peakon runs pass
    the initial positions, since their grid nodes are only labels.
    """
    times = sorted(float(t) for t in times)
    if times and times[0] < 0:
        raise InvalidArgumentError("times must be nonnegative")
    if dt <= 0:
        raise InvalidArgumentError("dt must be positive")
    flow = flow or KernelFlow(K0)
    grid = K0.grid
    q = (grid.nodes if q0 is None else np.asarray(q0, dtype=float)).copy()
    t = 0.0
    out = {}
    for target in times:
        steps = int(np.ceil((target - t) / dt - 1e-9)) if target > t else 0
        for k in range(steps):
            t0 = t + (target - t) * k / steps
            t1 = t + (target - t) * (k + 1) / steps
            h = t1 - t0
            v0 = q_velocity(flow(t0))
            vm = q_velocity(flow(0.5 * (t0 + t1)))
            v1 = q_velocity(flow(t1))
            # RK4 with a q-independent right side: the two midpoint stages coincide
            q = q + h / 6.0 * (v0 + 4.0 * vm + v1)
            if np.any(np.diff(q) <= 0):
                bad = int(np.argmin(np.diff(q)))
                raise MonotonicityError(
                    f"characteristics crossed near xi = {grid.nodes[bad]:.6g} at t = {t1:.6g}",
                    node=float(grid.nodes[bad]),
                    t=t1,
                )
        t = target
        out[target] = GridFunction(grid, q.copy())
    return out


def reconstruct_u(
    q: GridFunction, p: GridFunction, x_eval, method: str = "sum"
) -> np.ndarray:
    """Velocity ``u(x) = 1/2 int exp(-|x - q(eta)|) p(eta) deta`` at ``x_eval``.

    ``method="sum"`` is the weighted node sum.  ``method="split"`` splits the
    integral at the particle sitting at ``x``,
    ``u = (e^{-x} int_{q<x} e^{q} p + e^{x} int_{q>x} e^{-q} p) / 2``,
    with spline antiderivatives, so the result is smooth in ``x`` rather than
    a train of discrete peakons.  Valid for ``|q|, |x|`` below ~700.
    """
    x = np.asarray(x_eval.nodes if isinstance(x_eval, Grid) else x_eval, dtype=float)
    g = q.grid
    if method == "sum":
        return _green_matrix(x, q.values) @ (g.weights * p.values)
    if method != "split":
        raise InvalidArgumentError(f"unknown reconstruction method {method!r}")
    xi, qv, pv = g.nodes, q.values, p.values
    lo = CubicSpline(xi, np.exp(qv) * pv).antiderivative()
    hi = CubicSpline(xi, np.exp(-qv) * pv).antiderivative()
    eta = CubicSpline(qv, xi)(np.clip(x, qv[0], qv[-1]))
    left = lo(eta) - lo(xi[0])
    right = hi(xi[-1]) - hi(eta)
    return 0.5 * (np.exp(-x) * left + np.exp(x) * right)


def eulerian_m(q: GridFunction, p: GridFunction, x_eval) -> np.ndarray:
    """Momentum density ``m(q(xi), t) = p(xi) / q_xi(xi)``, interpolated to ``x_eval``.

    Zero outside the range covered by the characteristics.
    """
    x = np.asarray(x_eval.nodes if isinstance(x_eval, Grid) else x_eval, dtype=float)
    xi, qv = q.grid.nodes, q.values
    qs = CubicSpline(xi, qv)
    eta = CubicSpline(qv, xi)(np.clip(x, qv[0], qv[-1]))
    m = CubicSpline(xi, p.values)(eta) / qs(eta, 1)
    return np.where((x < qv[0]) | (x > qv[-1]), 0.0, m)


def hamiltonian(q: GridFunction, p: GridFunction) -> float:
    """``H = 1/4 int int exp(-|q - q'|) p p'``."""
    w = q.grid.weights * p.values
    return float(0.25 * w @ np.exp(-np.abs(q.values[:, None] - q.values[None, :])) @ w)


def invariants_report(state: CHState, init: InitialData, spec: SpectralData | None = None) -> dict:
    spec = spec or mercer(init.K0)
    t = state.t
    P0 = init.P
    H0 = float(np.sum(spec.eigenvalues**2))
    P_t = integrate(state.p)
    H_t = hamiltonian(state.q, state.p)
    lam_t = np.sort(np.linalg.eigvalsh(0.5 * (state.K_t.sym + state.K_t.sym.T)))[::-1]
    lam_0 = np.sort(np.linalg.eigvalsh(0.5 * (init.K0.sym + init.K0.sym.T)))[::-1]
    dq = np.diff(state.q.values) / np.diff(init.grid.nodes)
    lo, hi = np.exp(-0.5 * P0 * t), np.exp(0.5 * P0 * t)
    return {
        "t": t,
        "P": P_t,
        "H": H_t,
        "P_drift": abs(P_t - P0),
        "trace_P_drift": abs(2.0 * state.K_t.trace() - P0),
        "H_drift": abs(H_t - H0),
        "spectral_drift": float(np.max(np.abs(lam_t - lam_0))),
        "q_monotonicity_margin": float(np.min(np.diff(state.q.values))),
        "jacobian_lower_margin": float(np.min(dq) - lo),
        "jacobian_upper_margin": float(hi - np.max(dq)),
    }


def solve(
    init: InitialData,
    times: Sequence[float],
    x_eval=None,
    dt: float = 0.01,
    method: str = "sum",
) -> list[CHState]:
    """Run the pipeline and return one state per requested time."""
    times = sorted(float(t) for t in times)
    x = init.grid.nodes if x_eval is None else np.asarray(
        x_eval.nodes if isinstance(x_eval, Grid) else x_eval, dtype=float
    )
    flow = KernelFlow(init.K0)
    qs = evolve_q(init.K0, times, dt=dt, flow=flow)
    states = []
    for t in times:
        K_t = flow(t)
        p = recover_p(K_t)
        q = qs[t]
        u = reconstruct_u(q, p, x, method)
        st = CHState(t, q, p, u, x, K_t)
        conserved = invariants_report(st, init, flow.spec)
        states.append(CHState(t, q, p, u, x, K_t, conserved))
    return states


def semiseparability_defect(K: KernelOperator) -> float:
    """``max |K(a,b)K(b,c) - K(a,c)K(b,b)|`` over node triples ``a <= b <= c``,
    relative to ``max |K|^2``."""
    V = K.values
    n = V.shape[0]
    worst = 0.0
    for b in range(n):
        left = V[: b + 1, b]
        right = V[b, b:]
        lhs = np.outer(left, right)
        rhs = V[: b + 1, b:] * V[b, b]
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    scale = float(np.max(np.abs(V))) ** 2
    return worst / scale if scale > 0 else 0.0


def centered_m(u: np.ndarray, spacing: float) -> np.ndarray:
    """``(1 - d^2/dx^2) u`` by centered differences at interior points."""
    return u[1:-1] - (u[2:] - 2.0 * u[1:-1] + u[:-2]) / spacing**2


def pde_residual(
    init: InitialData,
    t: float,
    x_eval: np.ndarray,
    dt_fd: float,
    dt: float = 0.01,
    method: str = "split",
) -> np.ndarray:
    """Residual of ``m_t + u m_x + 2 m u_x`` on a uniform Eulerian grid.

    ``u`` is reconstructed at ``t - dt_fd, t, t + dt_fd``; ``m = (1 - d^2) u``
    and all derivatives are centered differences.  Returned on the nodes
    ``x_eval[2:-2]``.
    """
    if t - dt_fd < 0:
        raise InvalidArgumentError("t - dt_fd must be nonnegative")
    x = np.asarray(x_eval, dtype=float)
    H = float(x[1] - x[0])
    if not np.allclose(np.diff(x), H, rtol=1e-9, atol=0):
        raise InvalidArgumentError("Eulerian grid must be uniform")
    times = [t - dt_fd, t, t + dt_fd]
    flow = KernelFlow(init.K0)
    qs = evolve_q(init.K0, times, dt=dt, flow=flow)
    U = [reconstruct_u(qs[s], recover_p(flow(s)), x, method) for s in times]
    M = [centered_m(u, H) for u in U]
    u = U[1][1:-1]
    m = M[1]
    m_t = (M[2] - M[0]) / (2.0 * dt_fd)
    u_x = (U[1][2:] - U[1][:-2]) / (2.0 * H)
    m_x = (m[2:] - m[:-2]) / (2.0 * H)
    return m_t[1:-1] + u[1:-1] * m_x + 2.0 * m[1:-1] * u_x[1:-1]
