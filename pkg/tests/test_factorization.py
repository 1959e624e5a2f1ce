import numpy as np
import pytest

from hsflow import Grid, KernelOperator, make_grid
from hsflow.ch import semiseparability_defect
from hsflow.errors import ConditioningError, NotPositiveDefiniteError
from hsflow.factorization import (
    chain_steps,
    cholesky_factor,
    factor_exp,
    fredholm_factor,
    lax_solution,
    lax_solution_kernel,
    lax_solve,
)
from hsflow.operators import lax_rhs

from conftest import random_sym_coords


@pytest.fixture
def g12():
    return make_grid(1.5, 12)


def spd_perturbation(rng, grid, norm=1.0):
    """``S`` with ``I + S = (I + X)(I + X)^T``."""
    X = random_sym_coords(rng, grid, norm=norm).sym
    n = grid.n
    return KernelOperator.from_sym(grid, X + X.T + X @ X.T)


def test_cholesky_trivial(g12):
    b = cholesky_factor(KernelOperator.zeros(g12))
    assert np.array_equal(b.sym, np.eye(12))
    one = Grid(1.0, [0.0], [0.5])
    s = 3.0
    b1 = cholesky_factor(KernelOperator.from_sym(one, [[s]]))
    assert b1.sym[0, 0] == pytest.approx(np.sqrt(1 + s), rel=1e-15)


def test_cholesky_reproduces(g12, rng):
    S = spd_perturbation(rng, g12)
    L = cholesky_factor(S).sym
    assert np.all(np.triu(L, 1) == 0) and np.all(np.diag(L) > 0)
    assert np.max(np.abs(L @ L.T - (np.eye(12) + S.sym))) <= 1e-10


def test_cholesky_rejects_indefinite(g12):
    S = KernelOperator.from_sym(g12, -2.0 * np.eye(12))
    with pytest.raises(NotPositiveDefiniteError) as info:
        cholesky_factor(S)
    assert info.value.details["smallest_eigenvalue"] == pytest.approx(-1.0)


def test_fredholm_factor_trivial(g12):
    fam, b = fredholm_factor(KernelOperator.zeros(g12))
    assert np.all(fam.kernel.values == 0)
    assert np.allclose(b.sym, np.eye(12), atol=0)


@pytest.mark.parametrize("s11", [0.0, 0.7])
def test_fredholm_factor_two_nodes_by_hand(s11):
    g = make_grid(1.0, 2)
    w1 = g.weights[0]
    s = 0.3
    fam, _ = fredholm_factor(KernelOperator(g, [[s11, s], [s, 0.0]]))
    assert fam.kernel.values[0, 1] == pytest.approx(-s / (1 + s11 * w1), rel=1e-14)
    assert fam.kernel.values[1, 0] == 0.0


@pytest.mark.parametrize("use_minor", [False, True])
def test_routes_agree(g12, rng, use_minor):
    for _ in range(3):
        S = spd_perturbation(rng, g12, norm=0.8)
        fam, b = fredholm_factor(S, use_minor=use_minor)
        assert np.all(np.tril(fam.kernel.values) == 0)
        assert np.max(np.abs(b.sym - cholesky_factor(S).sym)) <= 1e-8


def test_orthogonal_elements_factor_to_identity(g12, rng):
    fac = factor_exp(random_sym_coords(rng, g12, symmetric=True), 0.4)
    Q = fac.b_plus.sym
    assert np.max(np.abs(np.triu(Q, 1))) > 1e-3  # not triangular
    S = KernelOperator.from_sym(g12, Q @ Q.T - np.eye(12))
    assert np.max(np.abs(cholesky_factor(S).sym - np.eye(12))) <= 1e-12


def test_factor_exp_trivial(g12, rng):
    fac = factor_exp(random_sym_coords(rng, g12), 0.0)
    assert np.array_equal(fac.b_minus.sym, np.eye(12)) and np.array_equal(fac.b_plus.sym, np.eye(12))


def test_factor_exp_diagonal(g12):
    lam = np.linspace(-1, 2, 12)
    K0 = KernelOperator.from_sym(g12, np.diag(lam))
    fac = factor_exp(K0, 0.8)
    assert np.allclose(np.abs(fac.b_plus.sym), np.eye(12), atol=1e-14)
    assert np.allclose(fac.b_minus.sym, np.diag(np.exp(-0.4 * lam)), atol=1e-14)
    assert np.max(np.abs(lax_solution(K0, 0.8).values - K0.values)) <= 1e-14


@pytest.mark.parametrize("symmetric", [True, False])
def test_factor_exp_diagnostics(g12, rng, symmetric):
    K0 = random_sym_coords(rng, g12, norm=2.0, symmetric=symmetric)
    fac = factor_exp(K0, 0.3)
    assert fac.orthogonality_defect <= 1e-10 and fac.reconstruction_defect <= 1e-10
    L = fac.b_minus.sym
    assert np.all(np.triu(L, 1) == 0) and np.all(np.diag(L) > 0)


def test_factor_exp_is_deterministic(g12, rng):
    K0 = random_sym_coords(rng, g12, symmetric=True)
    a, b = factor_exp(K0, 0.7), factor_exp(K0, 0.7)
    assert np.array_equal(a.b_minus.kernel.values, b.b_minus.kernel.values)
    assert np.array_equal(a.b_plus.kernel.values, b.b_plus.kernel.values)


def test_conditioning_error_and_chaining(g12):
    lam = np.linspace(0, 10, 12)
    K0 = KernelOperator.from_sym(g12, np.diag(lam))
    with pytest.raises(ConditioningError):
        factor_exp(K0, 5.0)
    assert chain_steps(K0, 5.0) == 2
    rng = np.random.default_rng(3)
    Q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    K0 = KernelOperator.from_sym(g12, Q @ np.diag(lam) @ Q.T)
    # each chained step keeps exp(-dt K0) at condition number below e^18
    a = lax_solve(K0, 3.5)
    b = lax_solve(K0, 3.5, threshold=10.0)
    assert a.steps == 2 and b.steps == 4
    scale = np.max(np.abs(a.kernel.values))
    assert np.max(np.abs(a.kernel.values - b.kernel.values)) <= 1e-8 * scale
    ev = np.linalg.eigvalsh(0.5 * (a.kernel.sym + a.kernel.sym.T))
    assert np.max(np.abs(ev - lam)) <= 1e-8 * lam.max()


def test_lax_solution_properties(gauss129):
    K0 = gauss129.K0
    assert lax_solution(K0, 0.0) is K0
    sol = lax_solve(K0, 1.0)
    assert sol.conjugation_defect <= 1e-9
    lam0 = np.linalg.eigvalsh(K0.sym)
    lam1 = np.linalg.eigvalsh(0.5 * (sol.kernel.sym + sol.kernel.sym.T))
    assert np.max(np.abs(lam1 - lam0)) <= 1e-10
    chained = lax_solution(lax_solution(K0, 0.4), 0.6)
    assert np.max(np.abs(chained.values - sol.kernel.values)) <= 1e-8


def test_lax_equation_central_difference(gauss129):
    K0 = gauss129.K0
    h = 1e-4
    D = (lax_solution(K0, 0.5 + h).values - lax_solution(K0, 0.5 - h).values) / (2 * h)
    assert np.max(np.abs(D - lax_rhs(lax_solution(K0, 0.5)).values)) <= 1e-6


def test_nonsymmetric_flow_is_isospectral(g12, rng):
    K0 = random_sym_coords(rng, g12, norm=1.0)
    Kt = lax_solution(K0, 0.7)
    a = np.sort_complex(np.linalg.eigvals(K0.sym))
    b = np.sort_complex(np.linalg.eigvals(Kt.sym))
    assert np.max(np.abs(a - b)) <= 1e-9


def test_single_pair_structure_survives(gauss129):
    for t in (0.5, 1.0, 2.0):
        assert semiseparability_defect(lax_solution(gauss129.K0, t)) <= 1e-8


def test_literal_assembly(gauss129):
    K0 = gauss129.K0
    assert lax_solution_kernel(K0, 0.0) is K0
    ref = lax_solution(K0, 0.5).values
    assert np.max(np.abs(lax_solution_kernel(K0, 0.5).values - ref)) <= 1e-7


def test_literal_assembly_via_minor(g12, rng):
    X = random_sym_coords(rng, g12, norm=1.0, symmetric=True)
    K0 = KernelOperator.from_sym(g12, X.sym @ X.sym)
    ref = lax_solution(K0, 0.5).values
    assert np.max(np.abs(lax_solution_kernel(K0, 0.5, use_minor=True).values - ref)) <= 1e-7


def test_one_node_grid_is_fixed():
    one = Grid(1.0, [0.0], [2.0])
    K0 = KernelOperator(one, [[0.8]])
    assert lax_solution_kernel(K0, 1.3).values[0, 0] == pytest.approx(0.8, rel=1e-15)
    assert lax_solution(K0, 1.3).values[0, 0] == pytest.approx(0.8, rel=1e-15)
