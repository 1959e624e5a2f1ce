import numpy as np
import pytest

from hsflow import Grid, GridFunction, KernelOperator, integrate, make_grid
from hsflow import ch
from hsflow.errors import AsymmetryError, InvalidArgumentError, PositivityError, SingularityError, TailMassError
from hsflow.factorization import factor_exp, lax_solution

from conftest import GAUSSIAN


def test_green_apply_zero_and_delta():
    g = make_grid(6.0, 121)
    assert np.all(ch.green_apply(GridFunction(g, np.zeros(121))).values == 0)
    m = np.zeros(121)
    k, c = 70, 0.8
    m[k] = 2 * c / g.weights[k]
    u = ch.green_apply(GridFunction(g, m)).values
    assert np.allclose(u, c * np.exp(-np.abs(g.nodes - g.nodes[k])), rtol=1e-14)


def test_green_apply_inverts_helmholtz():
    errs = []
    for n in (241, 481):
        g = make_grid(12.0, n)
        m0 = ch.profile_values(GAUSSIAN, g.nodes)
        u = ch.green_apply(GridFunction(g, m0)).values
        m = ch.centered_m(u, g.spacing)
        inner = np.abs(g.nodes[1:-1]) < 6
        errs.append(np.max(np.abs(m - m0[1:-1])[inner]))
    assert 3 <= errs[0] / errs[1] <= 5


def test_init_gaussian_mass():
    prof = {"name": "gaussian", "a": 2.0, "sigma": 0.7, "x0": 1.0}
    init = ch.init_data(prof, make_grid(12.0, 257))
    assert init.P == pytest.approx(2.0 * 0.7 * np.sqrt(np.pi), rel=1e-10)
    assert abs(init.K0.trace() - init.P / 2) <= 1e-10
    assert ch.semiseparability_defect(init.K0) <= 1e-15
    assert np.array_equal(init.w0_prime.values, np.sqrt(init.m0.values))
    assert np.max(np.abs(init.u0.values - ch.green_apply(init.m0).values)) == 0


def test_other_profiles():
    g = make_grid(20.0, 401)
    sech = {"name": "sech2", "a": 0.5, "width": 1.0, "x0": -2.0}
    assert ch.init_data(sech, g).P == pytest.approx(2 * 0.5 * 1.0, rel=1e-10)
    both = {"name": "sum", "terms": [sech, GAUSSIAN]}
    assert ch.init_data(both, g).P == pytest.approx(1.0 + np.sqrt(np.pi), rel=1e-10)
    with pytest.raises(InvalidArgumentError):
        ch.init_data({"name": "box"}, g)


def test_init_rejects_bad_profiles():
    with pytest.raises(PositivityError) as info:
        ch.init_data({"name": "gaussian", "a": -1.0}, make_grid(12.0, 65))
    assert info.value.details["node"] == 0.0
    with pytest.raises(TailMassError):
        ch.init_data(GAUSSIAN, make_grid(4.0, 65))
    # tails that underflow to zero inside the box are a positivity failure
    with pytest.raises(PositivityError):
        ch.init_data({"name": "gaussian", "a": 1.0, "sigma": 0.2}, make_grid(12.0, 65))


def test_mercer_data(gauss129):
    spec = ch.mercer(gauss129.K0)
    lam = spec.eigenvalues
    assert np.all(np.diff(lam) <= 0) and lam[-1] >= -1e-12
    assert lam[0] <= gauss129.P / 2 + 1e-10
    assert abs(lam.sum() - gauss129.K0.trace()) <= 1e-10
    assert abs(np.sum(lam**2) - gauss129.K0.hs_norm() ** 2) <= 1e-10
    w = gauss129.grid.weights
    gram = (spec.eigenfunctions * w) @ spec.eigenfunctions.T
    assert np.max(np.abs(gram - np.eye(spec.count))) <= 1e-10


def test_mercer_rank_one_and_asymmetry():
    g = make_grid(3.0, 31)
    phi = np.exp(-g.nodes**2)
    phi /= np.sqrt(np.sum(g.weights * phi**2))
    spec = ch.mercer(KernelOperator(g, 0.6 * np.outer(phi, phi)))
    assert spec.count == 1 and spec.eigenvalues[0] == pytest.approx(0.6, rel=1e-13)
    assert np.allclose(np.abs(spec.eigenfunction(0).values), phi, atol=1e-12)
    with pytest.raises(AsymmetryError):
        ch.mercer(KernelOperator(g, np.triu(np.ones((31, 31)))))


def test_evolve_kernel(gauss129):
    spec = ch.mercer(gauss129.K0)
    assert ch.evolve_kernel(spec, gauss129.K0, 0.0) is gauss129.K0
    Kt = ch.evolve_kernel(spec, gauss129.K0, 1.0)
    assert np.max(np.abs(Kt.values - lax_solution(gauss129.K0, 1.0).values)) <= 1e-8
    bm = factor_exp(gauss129.K0, 1.0).b_minus
    assert np.max(np.abs(ch.evolve_kernel(spec, gauss129.K0, 1.0, bm).values - Kt.values)) <= 1e-12


def test_evolve_kernel_one_node():
    one = Grid(1.0, [0.0], [1.0])
    K0 = KernelOperator(one, [[0.3]])
    assert ch.evolve_kernel(ch.mercer(K0), K0, 2.0).values[0, 0] == pytest.approx(0.3, rel=1e-14)


def test_recover_p(gauss129):
    assert np.array_equal(ch.recover_p(gauss129.K0).values, gauss129.m0.values)
    assert np.array_equal(ch.recover_p(2.0 * gauss129.K0).values, 2.0 * gauss129.m0.values)
    flow = ch.KernelFlow(gauss129.K0)
    for t in (0.5, 2.0):
        assert abs(integrate(ch.recover_p(flow(t))) - gauss129.P) <= 1e-8
    with pytest.raises(PositivityError):
        ch.recover_p(-1.0 * gauss129.K0)


def test_velocity_at_time_zero(gauss129):
    assert np.max(np.abs(ch.q_velocity(gauss129.K0) - gauss129.u0.values)) <= 1e-8
    with pytest.raises(SingularityError):
        ch.q_velocity(KernelOperator.zeros(gauss129.grid))


def test_small_data_moves_like_linear_transport():
    g = make_grid(12.0, 129)
    init = ch.init_data({"name": "gaussian", "a": 1e-6, "sigma": 1.0}, g, tail_tol=1e-12)
    t = 0.5
    q = ch.evolve_q(init.K0, [t])[t].values
    drift = q - g.nodes - t * init.u0.values
    assert np.max(np.abs(drift)) <= 1e-3 * t * np.max(init.u0.values)


def test_single_peakon_characteristic():
    one = Grid(1.0, [0.0], [1.0])
    p0, q0 = 1.4, -0.3
    K0 = KernelOperator(one, [[0.5 * p0]])
    out = ch.evolve_q(K0, [0.5, 2.0], q0=[q0])
    assert out[2.0].values[0] == pytest.approx(q0 + 0.5 * p0 * 2.0, abs=1e-14)
    x = np.linspace(-3, 3, 13)
    u = ch.reconstruct_u(out[2.0], GridFunction(one, [p0]), x)
    assert np.allclose(u, 0.5 * p0 * np.exp(-np.abs(x - out[2.0].values[0])), rtol=1e-14)


def test_reconstruct_u(gauss129):
    g = gauss129.grid
    q = GridFunction(g, g.nodes)
    assert np.max(np.abs(ch.reconstruct_u(q, gauss129.m0, g) - gauss129.u0.values)) <= 1e-10
    assert np.all(ch.reconstruct_u(q, GridFunction(g, np.zeros(g.n)), g) == 0)
    # the spline route is second order: error drops ~4x per halving of h
    errs = []
    for n in (129, 257):
        init = gauss129 if n == 129 else ch.init_data(GAUSSIAN, make_grid(12.0, n))
        gg = init.grid
        split = ch.reconstruct_u(GridFunction(gg, gg.nodes), init.m0, gg, method="split")
        errs.append(np.max(np.abs(split - init.u0.values)))
    assert errs[0] <= 5e-3
    assert 3.0 <= errs[0] / errs[1] <= 5.0
    with pytest.raises(InvalidArgumentError):
        ch.reconstruct_u(q, gauss129.m0, g, method="fft")


def test_eulerian_m_at_time_zero(gauss129):
    g = gauss129.grid
    m = ch.eulerian_m(GridFunction(g, g.nodes), gauss129.m0, g.nodes)
    assert np.max(np.abs(m - gauss129.m0.values)) <= 1e-14
    assert ch.eulerian_m(GridFunction(g, g.nodes), gauss129.m0, [20.0])[0] == 0.0


def test_solve_and_invariants(gauss129):
    states = ch.solve(gauss129, [0.0, 1.0, 2.0])
    first = states[0].conserved
    for key in ("P_drift", "H_drift", "spectral_drift"):
        assert first[key] <= 1e-14
    assert np.array_equal(states[0].q.values, gauss129.grid.nodes)
    spec = ch.mercer(gauss129.K0)
    for st in states:
        c = st.conserved
        assert c["P_drift"] <= 1e-8 and c["H_drift"] <= 1e-8 and c["spectral_drift"] <= 1e-8
        assert c["q_monotonicity_margin"] > 0
        assert c["jacobian_lower_margin"] >= -1e-12 and c["jacobian_upper_margin"] >= -1e-12
        assert np.array_equal(st.p.values, 2 * np.diag(st.K_t.values))
        assert abs(ch.hamiltonian(st.q, st.p) - np.sum(spec.eigenvalues**2)) <= 1e-8
        assert abs(st.K_t.hs_norm() ** 2 - np.sum(spec.eigenvalues**2)) <= 1e-10


def test_evolve_q_arguments(gauss129):
    with pytest.raises(InvalidArgumentError):
        ch.evolve_q(gauss129.K0, [-1.0])
    with pytest.raises(InvalidArgumentError):
        ch.evolve_q(gauss129.K0, [1.0], dt=0.0)


def test_pde_residual_small(gauss129):
    h = gauss129.grid.spacing
    x = np.arange(-4, 4 + h / 2, h)
    r = ch.pde_residual(gauss129, 0.5, x, 0.5 * h)
    assert np.max(np.abs(r)) < 0.05
    with pytest.raises(InvalidArgumentError):
        ch.pde_residual(gauss129, 0.01, x, 0.1)
