import numpy as np
import pytest
from scipy.integrate import quad, solve_bvp

from heatstab.errors import GridTooCoarse, ResonantGamma, SingularSystem
from heatstab.lifting import (
    assemble_dense, boundary_lift, cancelling_gamma, check_unique_continuation,
    closed_form_inner, closed_form_l, fixed_point_lifting, green_function, solve_lifting,
)
from heatstab.spectral import psi_derivative_at


def rel_err(sol, system, N):
    exact = closed_form_inner(sol.gamma, system, N)
    return np.max(np.abs(sol.inner - exact) / np.abs(exact))


def test_closed_forms_at_gamma_100(system):
    sol = solve_lifting(100.0, system, 0, M=2000)
    assert rel_err(sol, system, 0) <= 1e-4


def test_second_order_convergence(system):
    errs = [rel_err(solve_lifting(100.0, system, 0, M=M), system, 0) for M in (1000, 2000, 4000)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    np.testing.assert_allclose(ratios, 4.0, rtol=0.05)


@pytest.mark.parametrize("N", [1, 2])
def test_closed_forms_more_modes(system, N):
    sol = solve_lifting(120.0, system, N, M=2000)
    assert rel_err(sol, system, N) <= 1e-4


def test_lifting_boundary_values(system):
    sol = solve_lifting(60.0, system, 0, M=1000)
    assert sol.values[0] == pytest.approx(1.0, abs=1e-12)
    # measured with the three-point stencil, so only O(h^2) small
    assert abs(sol.bc_residual) < 1e-2


def test_ell_closed_form_odd_index(system):
    assert closed_form_l(77.0, 1, system) == pytest.approx(psi_derivative_at(1, 0.0, system))
    # even index carries the coupling term
    l0 = closed_form_l(77.0, 0, system)
    expected = (psi_derivative_at(0, 0.0, system)
                + system.kappa[0] * psi_derivative_at(1, 0.0, system) / (77.0 - system.lam[1]))
    assert l0 == pytest.approx(expected, rel=1e-14)


def test_inner_products_satisfy_projected_equation(system):
    # (gamma I - Lambda) m = psi'(0)
    N, g = 1, 90.0
    m = closed_form_inner(g, system, N)
    lhs = (g * np.eye(4) - system.lambda_struct(N)) @ m
    rhs = [psi_derivative_at(j, 0.0, system) for j in range(4)]
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


def test_dense_assembly_matches(system):
    D = assemble_dense(80.0, system, 0, 300)
    rhs = np.zeros(301)
    rhs[0] = 1.0
    np.testing.assert_allclose(np.linalg.solve(D, rhs), solve_lifting(80.0, system, 0, 300).values,
                               rtol=1e-9, atol=1e-12)


def test_errors(system):
    with pytest.raises(GridTooCoarse):
        solve_lifting(100.0, system, 0, M=100)
    with pytest.raises(SingularSystem):
        solve_lifting(4.0, system, 0, M=400)
    with pytest.raises(ResonantGamma):
        solve_lifting(system.lam[4], system, 2, M=400)


def test_unique_continuation_report(system):
    good = check_unique_continuation(np.array([25.0, 35.0]), system, 0)
    assert good.passed and good.offending == ()
    g = cancelling_gamma(2, system)
    assert g > system.params.c
    assert abs(closed_form_l(g, 4, system)) < 1e-10
    bad = check_unique_continuation(np.array([g, 40.0, 50.0, 60.0, 70.0, 80.0]), system, 2)
    assert not bad.passed
    assert (0, 4) in bad.offending
    assert bad.suggested_gammas == (g + 1.0,)


def test_green_function_against_bvp_solver():
    b, alpha = np.sqrt(20.0), 1.5
    f = lambda x: x * (np.pi - x) + np.cos(3 * x)  # noqa: E731

    def rhs(x, y):
        return np.vstack([y[1], b * b * y[0] - f(x)])

    def bc(ya, yb):
        return np.array([ya[0], ya[1] + yb[1] + alpha * yb[0]])

    xs = np.linspace(0, np.pi, 200)
    ref = solve_bvp(rhs, bc, xs, np.zeros((2, xs.size)), tol=1e-10, max_nodes=100_000)
    assert ref.success
    for x0 in (0.3, 1.2, 2.9):
        val, _ = quad(lambda xi: green_function([x0], [xi], b, alpha)[0, 0] * f(xi), 0, np.pi,
                      points=[x0], epsabs=1e-12)
        assert val == pytest.approx(ref.sol(x0)[0], abs=1e-7)


def test_boundary_lift_conditions():
    b, alpha = 4.0, 2.0
    x = np.array([0.0, np.pi])
    v = boundary_lift(x, b, alpha)
    h = 1e-6
    dv = (boundary_lift(x + h, b, alpha) - boundary_lift(x - h, b, alpha)) / (2 * h)
    assert v[0] == pytest.approx(0.0, abs=1e-15)
    # v' (0) + v'(pi) + alpha v(pi) = -alpha, so D = v + 1 satisfies the condition
    assert dv[0] + dv[1] + alpha * v[1] == pytest.approx(-alpha, abs=1e-6)


def test_fixed_point_route_agrees(system):
    fp = fixed_point_lifting(100.0, system, 0, M=2000)
    assert fp.converged and fp.ratio < 0.5
    direct = solve_lifting(100.0, system, 0, M=2000)
    assert np.max(np.abs(fp.values - direct.values)) < 1e-4


def test_fixed_point_ratio_decreases_with_gamma(system):
    ratios = [fixed_point_lifting(g, system, 0, M=400, max_iter=0).ratio for g in (15.0, 25.0, 100.0)]
    assert ratios[0] > ratios[1] > ratios[2]
    assert ratios[0] > 0.5 > ratios[1]
