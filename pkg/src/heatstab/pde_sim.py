"""Method-of-lines simulation of the (semi)linear heat equation

    y_t = y'' + c y + f(y),   0 < x < pi,
    y(t, 0) = int_0^pi omega(x) y(t, x) dx,
    y'(t, 0) + y'(t, pi) + alpha y(t, pi) = 0,

in open loop (``omega = 0``) or closed loop (``omega`` from a GainSet).
Interior nodes use central differences and a theta-scheme with the
nonlinearity explicit; both boundary conditions are algebraic rows solved
implicitly at every step.
"""
import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded

from . import kernels
from .errors import LinearSolveFailure
from .gains import feedback_coefficients, feedback_kernel
from .grid import bc_residual, bc_stencil, trapezoid_weights, uniform_grid
from .spectral import basis_matrix, solve_beta, SpectralParams

_NL_CODES = {"zero": 0, "power": 1, "custom-table": 2}


@dataclass(frozen=True)
class Nonlinearity:
    """Autonomous nonlinearity ``f(y)`` with ``f(0) = 0``.

    ``power`` is ``coeff * |y|**m`` (so ``m = 2`` gives ``coeff * y**2``);
    ``custom-table`` interpolates linearly in ``table = (ys, fs)`` and is
    held constant outside the tabulated range.
    """

    kind: str = "zero"
    m: float = 2.0
    coeff: float = 1.0
    table: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in _NL_CODES:
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == "power" and not self.m > 0:
            raise ValueError("power nonlinearity needs m > 0")
        if self.kind == "custom-table":
            if self.table is None:
                raise ValueError("custom-table nonlinearity needs a table")
            ys, fs = (np.asarray(t, dtype=float) for t in self.table)
            if ys.ndim != 1 or ys.shape != fs.shape or len(ys) < 2:
                raise ValueError("table must be two equal-length sequences")
            if np.any(np.diff(ys) <= 0):
                raise ValueError("table abscissae must be strictly increasing")
            if not ys[0] <= 0.0 <= ys[-1] or np.interp(0.0, ys, fs) != 0.0:
                raise ValueError("table must satisfy f(0) = 0")

    @property
    def code(self):
        return _NL_CODES[self.kind]

    def table_arrays(self):
        if self.kind != "custom-table":
            return np.zeros(2), np.zeros(2)
        return tuple(np.ascontiguousarray(t, dtype=float) for t in self.table)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(y)
        if self.kind == "power":
            return self.coeff * np.abs(y) ** self.m
        ys, fs = self.table_arrays()
        return np.interp(y, ys, fs)


@dataclass(frozen=True, eq=False)
class ClosedLoopProblem:
    c: float
    alpha: float
    M: int
    dt: float
    T: float
    y0: object  # callable x -> y, or array of M+1 samples
    nonlinearity: Nonlinearity = field(default_factory=Nonlinearity)
    controller: object = None  # GainSet or None for open loop
    theta: float = 1.0
    blowup_cap: float = 1e8
    save_every: Optional[int] = None
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.M < 8:
            raise ValueError("M must be at least 8")
        if not 0 < self.dt <= self.T:
            raise ValueError("need 0 < dt <= T")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")
        if self.controller is not None:
            p = self.controller.system.params
            if p.c != self.c or p.alpha != self.alpha:
                raise ValueError("controller was designed for different (c, alpha)")

    @property
    def nsteps(self):
        return int(round(self.T / self.dt))

    def initial_samples(self):
        x = uniform_grid(self.M)
        if callable(self.y0):
            return np.asarray(self.y0(x), dtype=float) * np.ones_like(x)
        y = np.asarray(self.y0, dtype=float)
        if y.shape != x.shape:
            raise ValueError(f"initial data has {y.shape}, grid has {x.shape}")
        return y


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    snapshots: np.ndarray
    l2norms: np.ndarray
    blowup: bool = False
    steps: int = 0
    backend: str = ""
    omega: Optional[np.ndarray] = None

    @property
    def controls(self):
        """Boundary values y(t, 0) at the stored times."""
        return self.snapshots[:, 0]

    def bc_residuals(self, alpha):
        """Max relative residuals of the two boundary rows after the first step.

        The initial samples need not satisfy the boundary conditions.
        """
        if len(self.times) < 2:
            return 0.0, 0.0
        S = self.snapshots[1:]
        W = trapezoid_weights(len(self.x) - 1)
        omega = np.zeros_like(self.x) if self.omega is None else self.omega
        scale = np.maximum(np.max(np.abs(S), axis=1), 1e-300)
        row0 = np.abs(S[:, 0] - S @ (W * omega)) / scale
        rowM = np.array([abs(bc_residual(s, alpha)) for s in S]) / scale
        return float(np.max(row0)), float(np.max(rowM))


def _implicit_parts(M, dt, c, theta, alpha, omega):
    """Tridiagonal part, correction rows and Woodbury data of the step matrix."""
    n = M + 1
    h = np.pi / M
    d = np.full(n, 1.0 / dt + theta * (2.0 / h ** 2 - c))
    dl = np.full(n - 1, -theta / h ** 2)
    du = np.full(n - 1, -theta / h ** 2)
    d[0] = 1.0
    du[0] = 0.0
    idx, val = bc_stencil(M, alpha)
    # row M: nodes M-1 and M stay in the band, the rest is a sparse correction
    dl[-1] = val[4]
    d[-1] = val[5]
    r_idx = np.ascontiguousarray(idx[:4], dtype=np.int64)
    r_val = np.ascontiguousarray(val[:4])
    a_row = -trapezoid_weights(M) * omega
    ab = np.zeros((3, n))
    ab[0, 1:] = du
    ab[1] = d
    ab[2, :-1] = dl
    U = np.zeros((n, 2))
    U[0, 0] = 1.0
    U[-1, 1] = 1.0
    try:
        Zw = solve_banded((1, 1), ab, U)
    except np.linalg.LinAlgError as exc:
        raise LinearSolveFailure("singular tridiagonal step matrix") from exc
    r_dense = np.zeros(n)
    r_dense[r_idx] = r_val
    cap = np.eye(2) + np.array([[a_row @ Zw[:, 0], a_row @ Zw[:, 1]],
                                [r_dense @ Zw[:, 0], r_dense @ Zw[:, 1]]])
    if np.linalg.cond(cap) > 1e14:
        raise LinearSolveFailure("boundary rows make the step matrix singular")
    capinv = np.linalg.inv(cap)
    return dict(dl=dl, d=d, du=du, a_row=np.ascontiguousarray(a_row), r_idx=r_idx,
                r_val=r_val, Zw=np.ascontiguousarray(Zw.T), capinv=capinv, h=h)


def simulate(problem, backend=None):
    """Integrate ``problem`` and return a :class:`Trajectory`.

    Blow-up (norm above ``blowup_cap`` or non-finite) truncates the
    trajectory and sets ``blowup``; it is not an error.
    """
    M = problem.M
    x = uniform_grid(M)
    omega = (np.zeros(M + 1) if problem.controller is None
             else feedback_kernel(problem.controller, x))
    nsteps = problem.nsteps
    if nsteps > problem.max_steps:
        raise ValueError(f"{nsteps} steps exceed max_steps={problem.max_steps}")
    stride = problem.save_every or max(1, nsteps // 500)
    parts = _implicit_parts(M, problem.dt, problem.c, problem.theta, problem.alpha, omega)
    tab_y, tab_f = problem.nonlinearity.table_arrays()
    march = kernels.get_march(backend)
    y0 = np.ascontiguousarray(problem.initial_samples())
    try:
        snaps, norms, saved, steps, blowup = march(
            y0, parts["dl"], parts["d"], parts["du"], parts["a_row"], parts["r_idx"],
            parts["r_val"], parts["Zw"], parts["capinv"], trapezoid_weights(M),
            float(problem.dt), parts["h"], float(problem.c), float(problem.theta),
            nsteps, stride, problem.nonlinearity.code, float(problem.nonlinearity.coeff),
            float(problem.nonlinearity.m), tab_y, tab_f, float(problem.blowup_cap),
        )
    except ZeroDivisionError as exc:
        raise LinearSolveFailure(str(exc)) from exc
    step_ids = np.arange(saved) * stride
    if blowup:
        step_ids[-1] = steps
    return Trajectory(
        times=step_ids * problem.dt, x=x, snapshots=snaps[:saved], l2norms=norms[:saved],
        blowup=bool(blowup), steps=int(steps),
        backend=backend or kernels.BACKEND, omega=omega,
    )


def project_coefficients(y, system, N):
    """``(<y, psi_j>)_{j <= 2N+1}`` by the trapezoid rule on the sample grid."""
    y = np.asarray(y, dtype=float)
    M = y.shape[-1] - 1
    Psi = basis_matrix(system, uniform_grid(M), 2 * N + 2, "psi")
    return (y * trapezoid_weights(M)) @ Psi.T


def transformed_coefficients(traj, gains):
    """Coefficients of ``z = y + sum_k u_k D_{gamma_k}`` against ``psi_j``."""
    Y = project_coefficients(traj.snapshots, gains.system, gains.N)
    U = np.array([feedback_coefficients(gains, s) for s in traj.snapshots])
    return Y + U @ gains.m


@dataclass(frozen=True, eq=False)
class ProjectedTrajectory:
    times: np.ndarray
    Z: np.ndarray
    lyapunov: np.ndarray

    @property
    def norms(self):
        return np.linalg.norm(self.Z, axis=1)


def simulate_projected_ode(gains, Z0, T, dt):
    """RK4 integration of ``Z' = -sum_k gamma_k B_k A Z``.

    Also returns ``<A Z, Z>`` along the trajectory.
    """
    K = gains.closed_loop_matrix()
    Z0 = np.asarray(Z0, dtype=float)
    if Z0.shape != (gains.r,):
        raise ValueError(f"Z0 must have length {gains.r}")
    spec_rad = np.max(np.abs(np.linalg.eigvals(K)))
    if dt * spec_rad > 2.5:
        raise ValueError(f"dt={dt} too large for RK4 (dt*|K| = {dt * spec_rad:.2f} > 2.5)")
    n = int(round(T / dt))
    Z = np.empty((n + 1, gains.r))
    Z[0] = Z0
    z = Z0.copy()
    for i in range(n):
        k1 = K @ z
        k2 = K @ (z + 0.5 * dt * k1)
        k3 = K @ (z + 0.5 * dt * k2)
        k4 = K @ (z + dt * k3)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        Z[i + 1] = z
    lyap = np.einsum("ti,ij,tj->t", Z, gains.A, Z)
    return ProjectedTrajectory(times=np.arange(n + 1) * dt, Z=Z, lyapunov=lyap)


def initial_data(preset, alpha=1.5, system=None, **params):
    """Named initial-data samplers returning ``f(x)``.

    ``eigenmode``: ``amplitude * sin((2k+1)x)`` (``family="odd"``) or
    ``sin(2 beta_k x)`` (``family="beta"``);
    ``gaussian``: bump at ``center`` with ``width``;
    ``bandlimited``: random sine series with ``n_terms`` modes from ``seed``,
    scaled to L2 norm ``amplitude``;
    ``basis``: Riesz basis function ``phi_j`` (needs ``system``).
    """
    amp = float(params.get("amplitude", 1.0))
    if preset == "eigenmode":
        k = int(params.get("k", 0))
        if params.get("family", "odd") == "beta":
            s = 2.0 * solve_beta(k, SpectralParams(alpha, 0.0))
        else:
            s = 2 * k + 1
        return lambda x: amp * np.sin(s * np.asarray(x))
    if preset == "gaussian":
        mu = float(params.get("center", np.pi / 2))
        w = float(params.get("width", 0.3))
        return lambda x: amp * np.exp(-0.5 * ((np.asarray(x) - mu) / w) ** 2)
    if preset == "bandlimited":
        n_terms = int(params.get("n_terms", 8))
        rng = np.random.default_rng(params.get("seed", 0))
        coef = rng.standard_normal(n_terms) / np.arange(1, n_terms + 1)
        norm = np.sqrt(0.5 * np.pi * np.sum(coef ** 2))
        n = np.arange(1, n_terms + 1)
        return lambda x: amp / norm * (coef @ np.sin(np.outer(n, np.asarray(x))))
    if preset == "basis":
        if system is None:
            raise ValueError("basis preset needs a spectral system")
        j = int(params.get("j", 0))
        from .spectral import eval_basis
        return lambda x: amp * eval_basis(j, x, system, "phi")
    raise ValueError(f"unknown initial-data preset {preset!r}")


@dataclass(frozen=True)
class BasinReport:
    scales: tuple
    verdicts: tuple
    rates: tuple
    largest_decaying: Optional[float]
    smallest_failing: Optional[float]


def semilinear_basin_probe(problem, scales, rho_target, fit: Callable = None):
    """Run ``problem`` with ``y0`` scaled by each factor and classify decay.

    Returns the largest scale whose trajectory decays at the target rate
    and the smallest one that does not (slower decay, growth or blow-up).
    """
    if fit is None:
        from .verify import decay_fit as fit
    base = problem.initial_samples()
    verdicts, rates = [], []
    for s in scales:
        if s == 0:
            verdicts.append("decays_at_target")
            rates.append(None)
            continue
        p = dataclasses.replace(problem, y0=s * base)
        rep = fit(simulate(p), rho_target)
        verdicts.append(rep.verdict)
        rates.append(rep.fitted_rate)
    ok = [s for s, v in zip(scales, verdicts) if v == "decays_at_target"]
    bad = [s for s, v in zip(scales, verdicts) if v != "decays_at_target"]
    return BasinReport(
        scales=tuple(scales), verdicts=tuple(verdicts), rates=tuple(rates),
        largest_decaying=max(ok) if ok else None,
        smallest_failing=min(bad) if bad else None,
    )
