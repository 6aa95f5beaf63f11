"""Decay-rate estimation and the ordered verification suite."""
import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import HeatstabError, InsufficientData
from .gains import feedback_coefficients, feedback_kernel, select_gammas
from .grid import trapezoid_weights, uniform_grid
from .lifting import (
    check_unique_continuation, closed_form_inner, fixed_point_lifting, solve_lifting,
)
from .pde_sim import (
    ClosedLoopProblem, Nonlinearity, initial_data, simulate, simulate_projected_ode,
    transformed_coefficients,
)
from . import pipeline
from .quadrature import gauss_nodes
from .spectral import (
    SpectralParams, _residual, basis_matrix, eval_basis, normalization_constant, solve_beta,
    solve_delta,
)

VERDICTS = ("decays_at_target", "decays_slower", "grows", "blowup")
MIN_SAMPLES = 10


@dataclass(frozen=True)
class DecayReport:
    fitted_rate: Optional[float]
    prefactor_C: Optional[float]
    fit_window: tuple
    residual: Optional[float]
    verdict: str
    rho_target: float
    tol: float

    def to_dict(self):
        return dataclasses.asdict(self)


def decay_fit(traj, rho_target, window=(0.2, 1.0), tol=0.1):
    """Least-squares line through ``log ||y(t)||`` on ``[w0*T, w1*T]``.

    ``traj`` needs ``times`` and ``l2norms`` (and optionally ``blowup``).
    ``fitted_rate`` is the negative slope, so growth shows up negative;
    ``prefactor_C`` is ``exp(intercept)`` and ``residual`` the RMS misfit
    in log space.
    """
    times = np.asarray(traj.times, dtype=float)
    norms = np.asarray(traj.l2norms, dtype=float)
    T = float(times[-1]) if len(times) else 0.0
    win = (window[0] * T, window[1] * T)
    if getattr(traj, "blowup", False):
        return DecayReport(None, None, win, None, "blowup", rho_target, tol)
    sel = (times >= win[0] - 1e-12 * T) & (times <= win[1] + 1e-12 * T) & (norms > 0)
    if np.count_nonzero(sel) < MIN_SAMPLES:
        raise InsufficientData(
            f"{np.count_nonzero(sel)} positive samples in window {win}, need {MIN_SAMPLES}"
        )
    t, logn = times[sel], np.log(norms[sel])
    (slope, intercept), *_ = np.linalg.lstsq(np.column_stack([t, np.ones_like(t)]), logn, rcond=None)
    resid = float(np.sqrt(np.mean((logn - slope * t - intercept) ** 2)))
    rate = -float(slope)
    if rate >= rho_target * (1.0 - tol):
        verdict = "decays_at_target"
    elif rate > 0:
        verdict = "decays_slower"
    else:
        verdict = "grows"
    return DecayReport(rate, float(np.exp(intercept)), win, resid, verdict, rho_target, tol)


# --- individual measurements -------------------------------------------------

def biorthogonality_error(system, count, tol=1e-13, max_panels=1024):
    """``max |<phi_i, psi_j> - delta_ij|`` over ``i, j < count``.

    Gauss-Legendre panels are doubled until the whole Gram matrix settles.
    """
    def gram(panels):
        x, w = gauss_nodes(0.0, np.pi, panels)
        return (basis_matrix(system, x, count, "phi") * w) @ basis_matrix(system, x, count, "psi").T

    panels = 8
    prev = gram(panels)
    while panels < max_panels:
        panels *= 2
        cur = gram(panels)
        if np.max(np.abs(cur - prev)) < tol:
            break
        prev = cur
    return float(np.max(np.abs(cur - np.eye(count))))


def boundary_identity_error(system, count):
    alpha = system.params.alpha
    worst = 0.0
    for j in range(count):
        p0, ppi = eval_basis(j, np.array([0.0, np.pi]), system, "psi")
        dpi = eval_basis(j, np.array([np.pi]), system, "psi", deriv=1)[0]
        worst = max(worst, abs(p0 + ppi), abs(dpi + alpha * ppi))
    return float(worst)


def operator_action_error(system, n_points=10_000):
    """Relative residual of ``A phi_{2k+1} - lam phi_{2k+1} - kappa phi_{2k}``
    and the absolute error of ``lam_{2k+1} - lam_{2k} = 2 delta_k kappa_k``."""
    x = np.linspace(0.0, np.pi, n_points)
    c = system.params.c
    rel = ident = 0.0
    for k in range(system.n_pairs):
        j = 2 * k + 1
        phi = eval_basis(j, x, system, "phi")
        A_phi = -eval_basis(j, x, system, "phi", deriv=2) - c * phi
        res = A_phi - system.lam[j] * phi - system.kappa[k] * eval_basis(j - 1, x, system, "phi")
        rel = max(rel, float(np.max(np.abs(res)) / np.max(np.abs(A_phi))))
        ident = max(ident, abs((system.lam[j] - system.lam[j - 1])
                               - 2.0 * system.delta[k] * system.kappa[k]))
    return rel, float(ident)


def root_checks(alpha, k_max=50):
    params = SpectralParams(alpha, 0.0)
    resid, outside = 0.0, 0
    for k in range(k_max + 1):
        d = solve_delta(k, params)
        beta = k + 0.5 + d
        resid = max(resid, _residual(k, d, alpha))
        outside += not (k + 0.5 < beta < k + 1)
    return float(resid), outside


def lifting_errors(gamma, system, N, M):
    sol = solve_lifting(gamma, system, N, M)
    exact = closed_form_inner(gamma, system, N)
    return float(np.max(np.abs(sol.inner - exact) / np.abs(exact)))


def form_mismatch(gains, M, n_tests, seed):
    x = uniform_grid(M)
    W = trapezoid_weights(M)
    omega = feedback_kernel(gains, x)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for s in rng.integers(0, 2 ** 63 - 1, size=n_tests):
        y = initial_data("bandlimited", seed=int(s), n_terms=12)(x)
        u_coef = -float(feedback_coefficients(gains, y).sum())
        u_kern = float(np.sum(W * omega * y))
        worst = max(worst, abs(u_coef - u_kern) / max(abs(u_kern), 1e-300))
    return worst


def projected_ode_checks(gains, n_runs, seed, T=2.0, dt=1e-3):
    """Lyapunov monotonicity violations and the slowest fitted rate of ``||Z||``."""
    rng = np.random.default_rng(seed)
    violations, slowest = 0, math.inf
    for _ in range(n_runs):
        pt = simulate_projected_ode(gains, rng.standard_normal(gains.r), T, dt)
        violations += int(np.any(np.diff(pt.lyapunov) >= 0))
        rep = decay_fit(NormSeries(pt.times, pt.norms), gains.gammas[0])
        slowest = min(slowest, rep.fitted_rate)
    return violations, float(slowest)


@dataclass(frozen=True)
class NormSeries:
    times: np.ndarray
    l2norms: np.ndarray
    blowup: bool = False


def projection_consistency(gains, c, alpha, M=800, dt=1e-4, T=0.25):
    """Fitted decay of the PDE-projected coefficients against the finite ODE.

    The initial state is the first closed-loop mode of the finite block, which
    keeps the non-normal transient of the ODE out of the fit window. Returns
    ``(pde_rate, ode_rate)``.
    """
    m0 = gains.m[0]
    y0 = lambda x: m0 @ basis_matrix(gains.system, x, gains.r, "phi")  # noqa: E731
    stride = max(1, int(round(T / dt / 100)))
    traj = simulate(ClosedLoopProblem(c, alpha, M, dt, T, y0, controller=gains, save_every=stride))
    Z = transformed_coefficients(traj, gains)
    pde = decay_fit(NormSeries(traj.times, np.linalg.norm(Z, axis=1)), gains.gammas[0])
    # ODE started from the PDE state after the first stored interval
    t1 = traj.times[1]
    pt = simulate_projected_ode(gains, Z[1], T - t1, dt)
    ode = decay_fit(NormSeries(pt.times + t1, pt.norms), gains.gammas[0])
    return pde.fitted_rate, ode.fitted_rate


# --- suite -------------------------------------------------------------------

class _Stage:
    def __init__(self, name):
        self.name = name
        self.items = []
        self.status = "ran"

    def add(self, name, value, threshold, passed, note=None):
        item = {"name": name, "value": _clean(value), "threshold": _clean(threshold),
                "passed": bool(passed)}
        if note:
            item["note"] = note
        self.items.append(item)
        return bool(passed)

    def error(self, name, exc):
        return self.add(name, None, None, False, note=f"{type(exc).__name__}: {exc}")

    def to_dict(self):
        return {"stage": self.name, "status": self.status, "items": self.items}


def _clean(v):
    if isinstance(v, (list, tuple)):
        return [_clean(u) for u in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def corrupt_normalization(system, factor=1.1):
    """Copy of ``system`` with every ``C_{k2}`` scaled (fault injection)."""
    return dataclasses.replace(system, C2=np.asarray(system.C2) * factor)


SUITE_ROOT_ALPHAS = (0.5, 1.0, 1.5, 2.0, 10.0)
SUITE_BIORTH_PAIRS = 6


def run_suite(config, system=None, gammas=None):
    """Run every check in a fixed order and return the report as a dict.

    Failures are recorded, never raised. If the gains stage fails (for
    example on a shift set violating unique continuation) the simulation
    stage is marked aborted.
    """
    seed = int(config.seed)
    N = pipeline.mode_count(config)
    if system is None:
        system = pipeline.spectral_system(config, N)
    c = config.c
    stages = []

    st = _Stage("spectral")
    stages.append(st)
    checks = [root_checks(a) for a in SUITE_ROOT_ALPHAS]
    resid = max(r for r, _ in checks)
    outside = sum(o for _, o in checks)
    st.add("spectral.root_residual", resid, 1e-12, resid <= 1e-12)
    st.add("spectral.root_bracketing", outside, 0, outside == 0)
    beta0 = solve_beta(0, SpectralParams(1.5, c))
    st.add("spectral.exact_root_beta0", abs(beta0 - 0.75), 1e-12, abs(beta0 - 0.75) <= 1e-12)
    c02 = abs(normalization_constant(0, SpectralParams(1.5, c)) - 6.0 / (3.0 * np.pi + 2.0))
    st.add("spectral.exact_root_normalization", c02, 1e-10, c02 <= 1e-10)
    count = 2 * min(SUITE_BIORTH_PAIRS, system.n_pairs)
    err = biorthogonality_error(system, count)
    st.add("spectral.biorthonormality", err, 1e-8, err <= 1e-8)
    err = boundary_identity_error(system, count)
    st.add("spectral.boundary_identities", err, 1e-10, err <= 1e-10)
    rel, ident = operator_action_error(system)
    st.add("spectral.operator_action", rel, 1e-6, rel <= 1e-6)
    st.add("spectral.coefficient_identity", ident, 1e-10, ident <= 1e-10)

    select_error = None
    if gammas is None:
        try:
            gammas = select_gammas(config.rho, N, config.gamma_spacing, system,
                                   check_contraction=config.require_contraction)
        except HeatstabError as exc:
            select_error = exc
    gam = None if gammas is None else np.asarray(gammas, dtype=float)

    st = _Stage("lifting")
    stages.append(st)
    try:
        e1 = lifting_errors(100.0, system, N, 2000)
        e2 = lifting_errors(100.0, system, N, 4000)
        st.add("lifting.closed_form_consistency", e1, 1e-4, e1 <= 1e-4)
        ratio = e1 / e2
        st.add("lifting.convergence_ratio", ratio, [3.0, 5.0], 3.0 <= ratio <= 5.0)
    except HeatstabError as exc:
        st.error("lifting.closed_form_consistency", exc)
    if gam is not None:
        try:
            fp = fixed_point_lifting(gam[0], system, N, M=1000)
            direct = solve_lifting(gam[0], system, N, M=1000)
            diff = float(np.max(np.abs(fp.values - direct.values)))
            st.add("lifting.contraction_ratio", fp.ratio, 1.0, fp.ratio < 1.0 and fp.converged)
            st.add("lifting.contraction_agreement", diff, 1e-3, diff <= 1e-3)
        except HeatstabError as exc:
            st.error("lifting.contraction", exc)

    st = _Stage("gains")
    stages.append(st)
    gains = None
    if select_error is not None:
        st.error("gains.select_gammas", select_error)
    else:
        uc = check_unique_continuation(gam, system, N)
        st.add("gains.unique_continuation", uc.min_abs_ell, uc.threshold, uc.passed,
               note=None if uc.passed else f"offending (k, j): {list(uc.offending)}")
        if uc.passed:
            try:
                gains = _gains_items(st, config, system, gam, N, seed)
            except HeatstabError as exc:
                st.error("gains.build", exc)
    if gains is not None and not all(i["passed"] for i in st.items):
        gains = None

    st = _Stage("simulation")
    stages.append(st)
    if gains is None:
        st.status = "aborted"
    else:
        _simulation_stage(st, config, system, gains)

    n_items = sum(len(s.items) for s in stages)
    n_pass = sum(i["passed"] for s in stages for i in s.items)
    return {
        "suite": "heatstab",
        "config": config.to_dict(),
        "stages": [s.to_dict() for s in stages],
        "summary": {
            "items": n_items, "passed": n_pass, "failed": n_items - n_pass,
            "aborted": [s.name for s in stages if s.status == "aborted"],
            "all_passed": n_pass == n_items and all(s.status == "ran" for s in stages),
        },
    }


def _gains_items(st, config, system, gammas, N, seed):
    gains = pipeline.design(config, system=system, gammas=gammas).gains
    st.add("gains.gammas", list(gains.gammas), None, True)
    st.add("gains.conditioning", gains.cond_modes, 1e12, gains.cond_modes <= 1e12,
           note=f"cond(sum B_k) = {gains.cond:.6e}")
    S = gains.Bk.sum(axis=0)
    inv_err = float(np.max(np.abs(gains.A @ S - np.eye(gains.r))))
    st.add("gains.inverse", inv_err, 1e-8, inv_err <= 1e-8)
    fm = form_mismatch(gains, config.M, 100, seed)
    st.add("gains.form_equivalence", fm, 1e-8, fm <= 1e-8)
    re_max = float(np.max(np.linalg.eigvals(gains.closed_loop_matrix()).real))
    bound = -gains.gammas[0] + 1e-6
    st.add("gains.closed_loop_spectrum", re_max, bound, re_max <= bound)
    viol, slowest = projected_ode_checks(gains, 50, seed)
    st.add("gains.lyapunov_monotone", viol, 0, viol == 0)
    target = 0.95 * gains.gammas[0]
    st.add("gains.projected_decay_rate", slowest, target, slowest >= target)
    return gains


def _simulation_stage(st, config, system, gains):
    c, alpha, backend = config.c, config.alpha, config.backend
    zero = Nonlinearity("zero")
    try:
        # open-loop eigenmodes: sin x and sin(2 beta_0 x)
        beta0 = float(system.beta[0])
        for name, s in (("odd", 1.0), ("beta", 2.0 * beta0)):
            expected = c - s * s
            p = ClosedLoopProblem(c, alpha, 400, 1e-4, 1.0, lambda x, s=s: np.sin(s * x),
                                  nonlinearity=zero)
            rate = -decay_fit(simulate(p, backend), 1.0).fitted_rate
            rel = abs(rate - expected) / max(abs(expected), 1.0)
            st.add(f"simulation.open_loop_eigenmode_{name}", rate, expected, rel <= 0.02)

        rho, tol = config.rho, config.decay_tol
        base = pipeline.problem(config, gains)
        traj = simulate(base, backend)
        rep = decay_fit(traj, rho, tol=tol)
        st.add("simulation.closed_loop_decay", rep.fitted_rate, rho * (1 - tol),
               rep.verdict == "decays_at_target", note=f"verdict {rep.verdict}")
        r0, rM = traj.bc_residuals(alpha)
        st.add("simulation.bc_residual", max(r0, rM), 1e-9, max(r0, rM) <= 1e-9)

        fine = dataclasses.replace(base, M=2 * base.M, dt=0.5 * base.dt)
        rep2 = decay_fit(simulate(fine, backend), rho, tol=tol)
        if rep.fitted_rate is None or rep2.fitted_rate is None:
            st.add("simulation.refinement", None, 0.01, False, note="blow-up")
        else:
            change = abs(rep2.fitted_rate - rep.fitted_rate) / abs(rep.fitted_rate)
            st.add("simulation.refinement", change, 0.01, change < 0.01)

        pde, ode = projection_consistency(gains, c, alpha)
        g0 = float(gains.gammas[0])
        st.add("simulation.projection_rate", pde, 0.9 * g0, pde >= 0.9 * g0)
        rel = abs(pde - ode) / ode
        st.add("simulation.projection_vs_ode", rel, 0.05, rel <= 0.05)

        lin = dataclasses.replace(base, nonlinearity=zero, T=min(base.T, 1.0))
        a = simulate(lin, backend)
        scaled = dataclasses.replace(lin, y0=3.7 * lin.initial_samples())
        b = simulate(scaled, backend)
        err = float(np.max(np.abs(b.snapshots - 3.7 * a.snapshots))
                    / np.max(np.abs(3.7 * a.snapshots)))
        st.add("simulation.linearity", err, 1e-8, err <= 1e-8)
    except HeatstabError as exc:
        st.error("simulation.run", exc)


def report_json(report):
    """Canonical serialisation: fixed key order from construction, 2-space indent."""
    return json.dumps(report, indent=2, ensure_ascii=False) + "\n"


def suite_passed(report):
    return bool(report["summary"]["all_passed"])
