import dataclasses

import numpy as np
import pytest
from scipy.integrate import trapezoid

from heatstab import kernels
from heatstab.errors import LinearSolveFailure
from heatstab.gains import assemble_gains
from heatstab.grid import uniform_grid
from heatstab.pde_sim import (
    ClosedLoopProblem, Nonlinearity, initial_data, project_coefficients,
    semilinear_basin_probe, simulate, simulate_projected_ode, transformed_coefficients,
)
from heatstab.spectral import SpectralParams, basis_matrix, build_system
from heatstab.verify import NormSeries, decay_fit


def growth_rate(traj, lo=0.2):
    return -decay_fit(traj, 1.0, window=(lo, 1.0)).fitted_rate


def test_zero_initial_data_stays_zero(gains):
    for nl in (Nonlinearity(), Nonlinearity("power", m=2)):
        traj = simulate(ClosedLoopProblem(5.0, 1.5, 100, 1e-3, 0.5, np.zeros_like,
                                          nonlinearity=nl, controller=gains))
        assert np.all(traj.snapshots == 0.0)
        assert np.all(traj.l2norms == 0.0)


def test_open_loop_eigenmode_growth():
    traj = simulate(ClosedLoopProblem(5.0, 1.5, 400, 1e-4, 1.0, np.sin))
    assert growth_rate(traj) == pytest.approx(4.0, rel=0.02)
    # implicit Euler on the semi-discrete eigenvalue: shape stays sin x
    s = traj.snapshots[-1]
    np.testing.assert_allclose(s / s.max(), np.sin(traj.x), atol=1e-3)


def test_open_loop_second_family():
    system = build_system(SpectralParams(1.5, 5.0), 2)
    s = 2 * system.beta[0]
    traj = simulate(ClosedLoopProblem(5.0, 1.5, 400, 1e-4, 1.0, lambda x: np.sin(s * x)))
    assert growth_rate(traj) == pytest.approx(5.0 - s * s, rel=0.02)


def test_theta_half_is_more_accurate():
    r = {}
    for theta in (1.0, 0.5):
        traj = simulate(ClosedLoopProblem(5.0, 1.5, 400, 1e-2, 1.0, np.sin, theta=theta))
        r[theta] = abs(growth_rate(traj) - 4.0)
    assert r[0.5] < r[1.0]


def test_closed_loop_decay(gains):
    traj = simulate(ClosedLoopProblem(5.0, 1.5, 400, 1e-3, 5.0, np.sin, controller=gains))
    rep = decay_fit(traj, 2.0)
    assert rep.verdict == "decays_at_target"
    assert rep.fitted_rate >= 1.8


def test_boundary_rows_hold(gains):
    traj = simulate(ClosedLoopProblem(5.0, 1.5, 400, 1e-3, 1.0, np.sin, controller=gains))
    r0, rM = traj.bc_residuals(1.5)
    assert r0 <= 1e-9 and rM <= 1e-9
    assert np.all(traj.l2norms >= 0)


def test_refinement_invariance(gains):
    rates = []
    for M, dt in ((400, 1e-3), (800, 5e-4)):
        traj = simulate(ClosedLoopProblem(5.0, 1.5, M, dt, 5.0, np.sin, controller=gains))
        rates.append(decay_fit(traj, 2.0).fitted_rate)
    assert abs(rates[1] - rates[0]) / rates[0] < 0.01


def test_linearity(gains):
    base = ClosedLoopProblem(5.0, 1.5, 200, 1e-3, 1.0, np.sin, controller=gains)
    a = simulate(base)
    b = simulate(dataclasses.replace(base, y0=-2.5 * base.initial_samples()))
    assert np.max(np.abs(b.snapshots + 2.5 * a.snapshots)) <= 1e-8 * np.max(np.abs(2.5 * a.snapshots))


def test_blowup_is_flagged_not_raised():
    p = ClosedLoopProblem(5.0, 1.5, 200, 1e-3, 5.0, lambda x: 5 * np.sin(x),
                          nonlinearity=Nonlinearity("power", m=2))
    traj = simulate(p)
    assert traj.blowup
    assert traj.times[-1] < 5.0
    assert not np.isfinite(traj.l2norms[-1]) or traj.l2norms[-1] > 1e8
    assert decay_fit(traj, 2.0).verdict == "blowup"


def test_blowup_cap_is_configurable():
    p = ClosedLoopProblem(5.0, 1.5, 100, 1e-3, 2.0, np.sin, blowup_cap=10.0)
    traj = simulate(p)
    assert traj.blowup and traj.l2norms[-1] > 10.0


def test_semilinear_small_data_decays(gains):
    p = ClosedLoopProblem(5.0, 1.5, 400, 1e-3, 5.0, lambda x: 1e-3 * np.sin(x),
                          nonlinearity=Nonlinearity("power", m=2), controller=gains)
    assert decay_fit(simulate(p), 2.0).fitted_rate >= 1.8


def test_basin_probe(gains):
    p = ClosedLoopProblem(5.0, 1.5, 200, 1e-3, 3.0, np.sin,
                          nonlinearity=Nonlinearity("power", m=2), controller=gains)
    rep = semilinear_basin_probe(p, [0.0, 1e-3, 1e3], 2.0)
    assert rep.verdicts[0] == "decays_at_target"
    assert rep.verdicts[1] == "decays_at_target"
    assert rep.verdicts[2] == "blowup"
    assert rep.largest_decaying == 1e-3 and rep.smallest_failing == 1e3


def test_project_coefficients(system):
    M = 4000
    x = uniform_grid(M)
    N = 2
    Phi = basis_matrix(system, x, 2 * N + 3, "phi")
    for i in range(2 * N + 2):
        np.testing.assert_allclose(project_coefficients(Phi[i], system, N), np.eye(2 * N + 2)[i],
                                   atol=1e-6)
    e = project_coefficients(Phi[0] + Phi[3], system, N)
    np.testing.assert_allclose(e, np.eye(6)[0] + np.eye(6)[3], atol=1e-6)
    np.testing.assert_allclose(project_coefficients(Phi[2 * N + 2], system, N), 0.0, atol=1e-6)


def test_projected_ode(gains, rng):
    z = simulate_projected_ode(gains, np.zeros(2), 0.5, 1e-3)
    assert np.all(z.Z == 0)
    for _ in range(50):
        pt = simulate_projected_ode(gains, rng.standard_normal(2), 2.0, 1e-3)
        assert np.all(np.diff(pt.lyapunov) < 0)
        rate = decay_fit(NormSeries(pt.times, pt.norms), 25.0).fitted_rate
        assert rate >= 0.95 * gains.gammas[0]


def test_projected_ode_step_guard(gains):
    with pytest.raises(ValueError):
        simulate_projected_ode(gains, np.ones(2), 1.0, 0.5)
    with pytest.raises(ValueError):
        simulate_projected_ode(gains, np.ones(3), 1.0, 1e-3)


def test_projection_follows_finite_block(gains):
    m0 = gains.m[0]
    p = ClosedLoopProblem(5.0, 1.5, 800, 1e-4, 0.25,
                          lambda x: m0 @ basis_matrix(gains.system, x, 2, "phi"),
                          controller=gains, save_every=25)
    traj = simulate(p)
    Z = transformed_coefficients(traj, gains)
    rate = decay_fit(NormSeries(traj.times, np.linalg.norm(Z, axis=1)), 25.0).fitted_rate
    assert rate >= 0.9 * gains.gammas[0]


def test_problem_validation(gains):
    with pytest.raises(ValueError):
        ClosedLoopProblem(5.0, 1.5, 100, 2.0, 1.0, np.sin)
    with pytest.raises(ValueError):
        ClosedLoopProblem(5.0, -1.0, 100, 1e-3, 1.0, np.sin)
    with pytest.raises(ValueError):
        ClosedLoopProblem(4.0, 1.5, 100, 1e-3, 1.0, np.sin, controller=gains)
    with pytest.raises(ValueError):
        ClosedLoopProblem(5.0, 1.5, 100, 1e-3, 1.0, np.sin, theta=0.2)
    with pytest.raises(ValueError):
        ClosedLoopProblem(5.0, 1.5, 100, 1e-3, 1.0, np.zeros(7)).initial_samples()


def test_linear_solve_failure_is_mapped(monkeypatch):
    def broken(*args, **kwargs):
        raise ZeroDivisionError("zero pivot")
    monkeypatch.setattr(kernels, "get_march", lambda backend=None: broken)
    with pytest.raises(LinearSolveFailure):
        simulate(ClosedLoopProblem(5.0, 1.5, 100, 1e-3, 0.1, np.sin))


def test_nonlinearity_kinds():
    y = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(Nonlinearity("power", m=2, coeff=1.0)(y), y ** 2)
    np.testing.assert_allclose(Nonlinearity("power", m=3, coeff=0.5)(y), 0.5 * np.abs(y) ** 3)
    tab = Nonlinearity("custom-table", table=((-1.0, 0.0, 1.0), (-2.0, 0.0, 3.0)))
    np.testing.assert_allclose(tab(np.array([-5.0, -0.5, 0.0, 0.5, 5.0])), [-2, -1, 0, 1.5, 3])
    assert np.all(Nonlinearity()(y) == 0)
    with pytest.raises(ValueError):
        Nonlinearity("custom-table", table=((-1.0, 1.0), (1.0, 1.0)))
    with pytest.raises(ValueError):
        Nonlinearity("cubic")
    with pytest.raises(ValueError):
        Nonlinearity("power", m=0)


def test_initial_data_presets(system):
    x = np.linspace(0, np.pi, 201)
    np.testing.assert_allclose(initial_data("eigenmode", k=1)(x), np.sin(3 * x))
    b = initial_data("eigenmode", alpha=1.5, k=0, family="beta")(x)
    np.testing.assert_allclose(b, np.sin(1.5 * x), atol=1e-14)
    g = initial_data("gaussian", center=1.0, width=0.2)(x)
    assert x[np.argmax(g)] == pytest.approx(1.0, abs=0.02)
    u1 = initial_data("bandlimited", seed=3)(x)
    u2 = initial_data("bandlimited", seed=3)(x)
    np.testing.assert_array_equal(u1, u2)
    assert np.sqrt(trapezoid(u1 ** 2, x)) == pytest.approx(1.0, rel=1e-3)
    np.testing.assert_allclose(initial_data("basis", system=system, j=3)(x),
                               basis_matrix(system, x, 4)[3])
    with pytest.raises(ValueError):
        initial_data("basis")
    with pytest.raises(ValueError):
        initial_data("square")


def test_controller_for_other_system_rejected():
    sys2 = build_system(SpectralParams(2.0, 5.0), 4)
    g = assemble_gains(sys2, np.array([25.0, 35.0]), 0)
    with pytest.raises(ValueError):
        ClosedLoopProblem(5.0, 1.5, 100, 1e-3, 1.0, np.sin, controller=g)
