"""Gain matrices and the explicit feedback kernel.

For shifts ``gamma_0 < ... < gamma_{2N+1}`` let ``m_k`` be the vector of
lifting inner products ``<D_{gamma_k}, psi_j>``. Then

    B_k = m_k m_k^T,    A = (B_0 + ... + B_{2N+1})^{-1},
    u(y) = -sum_k <Lambda_k A Y, l_k> = int_0^pi omega(x) y(x) dx,

with ``Y = (<y, psi_j>)_j`` and ``omega = -(A sum_k m_k) . psi``. The
projected closed loop is ``Z' = -sum_k gamma_k B_k A Z``.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import AdmissibilityExhausted, FormMismatch, SingularSum
from .grid import trapezoid_weights, uniform_grid
from .lifting import (
    check_unique_continuation,
    closed_form_ell,
    fixed_point_lifting,
    solve_lifting,
)
from .spectral import basis_matrix

COND_MAX = 1e12
RESONANCE_GAP = 1e-6
CONTRACTION_MAX = 0.5


@dataclass(frozen=True, eq=False)
class GainSet:
    system: object
    N: int
    gammas: np.ndarray
    lambda_diag: np.ndarray   # (K, r): row k holds 1/(gamma_k - lam_j)
    ell: np.ndarray           # (K, r): l_j evaluated at gamma_k
    B: np.ndarray             # (K, r, r): l(gamma_k) l(gamma_k)^T
    Bk: np.ndarray            # (K, r, r)
    A: np.ndarray
    lambda_struct: np.ndarray
    cond: float               # of sum_k B_k
    cond_modes: float         # of the row-equilibrated mode matrix actually factored
    weights: np.ndarray       # omega = weights . (psi_0, ..., psi_{2N+1})
    mode_lu: tuple = field(repr=False, default=None)
    mode_scale: np.ndarray = field(repr=False, default=None)
    lifting_mismatch: float = field(default=float("nan"))

    @property
    def r(self):
        return 2 * self.N + 2

    @property
    def m(self):
        return self.lambda_diag * self.ell

    def closed_loop_matrix(self):
        """``-sum_k gamma_k B_k A``, evaluated as ``-M diag(gamma) M^{-1}``."""
        Minv = la.lu_solve(self.mode_lu, np.diag(self.mode_scale))
        return -(self.m.T * self.gammas) @ Minv

    def kernel(self, x):
        return feedback_kernel(self, x)


def _factor_modes(m):
    """Pivoted LU of the row-equilibrated matrix with columns ``m_k``.

    ``sum_k B_k = M M^T``, so every quantity needed downstream follows from
    solves with ``M`` whose condition number is the square root of that of
    the sum. Returns ``(lu, scale, cond)`` with ``M = diag(1/scale) M_s``.
    """
    M = m.T
    scale = 1.0 / np.max(np.abs(M), axis=1)
    Ms = scale[:, None] * M
    cond = float(np.linalg.cond(Ms))
    if not np.isfinite(cond) or cond > COND_MAX:
        raise SingularSum(f"lifting vectors nearly dependent (condition {cond:.3e})")
    return la.lu_factor(Ms), scale, cond


def _admissible(gammas, rho, system, N, check_contraction):
    """Return None if the shifts are usable, otherwise a short reason."""
    c = system.params.c
    if np.any(gammas <= max(rho, c)):
        return "below"
    if np.any(np.diff(gammas) <= 0):
        return "order"
    gap = np.min(np.abs(gammas[:, None] - system.lam[None, :]))
    if gap <= RESONANCE_GAP:
        return "resonant"
    if not check_unique_continuation(gammas, system, N).passed:
        return "continuation"
    m = np.array([closed_form_ell(g, system, N) / (g - system.lam[:2 * N + 2]) for g in gammas])
    try:
        _factor_modes(m)
    except SingularSum:
        return "conditioning"
    if check_contraction:
        ratio = fixed_point_lifting(gammas[0], system, N, M=400, max_iter=0).ratio
        if ratio >= CONTRACTION_MAX:
            return "contraction"
    return None


def select_gammas(rho, N, spacing, system, base=None, max_shifts=40, check_contraction=True):
    """Equally spaced shifts ``gamma_k = base + k * spacing``.

    Starts from ``max(rho, c) + 10`` and shifts the base up by half a
    spacing until the set is non-resonant, passes the unique-continuation
    check and, optionally, the smallest shift makes the lifting fixed-point
    map contract with ratio below 0.5. Ill-conditioned sums widen the
    spacing instead.
    """
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    r = 2 * N + 2
    system._check_index(r - 1)
    if base is None:
        base = max(rho, system.params.c) + 10.0
    for _ in range(max_shifts):
        gammas = base + spacing * np.arange(r, dtype=float)
        reason = _admissible(gammas, rho, system, N, check_contraction)
        if reason is None:
            return gammas
        if reason == "conditioning":
            spacing *= 2.0
        else:
            base += 0.5 * spacing
    raise AdmissibilityExhausted(
        f"no admissible shift set after {max_shifts} attempts (last failure: {reason})"
    )


def build_gains(system, liftings, N=None):
    """Assemble B_k, A and the kernel weights from one lifting per shift.

    ``m_k`` is taken from the closed forms at each ``gamma_k``, so that
    ``B_k = Lambda_k (l l^T) Lambda_k = m_k m_k^T`` holds exactly; the
    numerically solved inner products are compared against it and the
    largest relative deviation is stored as ``lifting_mismatch``.

    ``A`` and the kernel weights are obtained from a pivoted LU of the
    square mode matrix rather than by inverting the sum; its condition
    number must stay below ``COND_MAX``.
    """
    K = len(liftings)
    if N is None:
        N = K // 2 - 1
    r = 2 * N + 2
    if K != r:
        raise ValueError(f"need {r} liftings for N={N}, got {K}")
    gammas = np.array([L.gamma for L in liftings])
    uc = check_unique_continuation(gammas, system, N)
    if not uc.passed:
        raise SingularSum(f"unique continuation fails at (k, j) = {uc.offending}")
    lam = system.lam[:r]
    lambda_diag = 1.0 / (gammas[:, None] - lam[None, :])
    ell = np.array([closed_form_ell(g, system, N) for g in gammas])
    B = np.einsum("ki,kj->kij", ell, ell)
    Bk = np.einsum("ki,kij,kj->kij", lambda_diag, B, lambda_diag)
    m = lambda_diag * ell
    mismatch = 0.0
    for k, L in enumerate(liftings):
        if L.inner is not None and len(L.inner) == r:
            mismatch = max(mismatch, float(np.max(np.abs(L.inner - m[k]) / np.abs(m[k]))))
    S = Bk.sum(axis=0)
    lu, scale, cond_m = _factor_modes(m)
    # A = (M M^T)^{-1} = M^{-T} M^{-1} with M = [m_0 ... m_{2N+1}]
    Minv = la.lu_solve(lu, np.diag(scale))
    A = Minv.T @ Minv
    A = 0.5 * (A + A.T)
    weights = -scale * la.lu_solve(lu, np.ones(r), trans=1)
    return GainSet(
        system=system, N=N, gammas=gammas, lambda_diag=lambda_diag, ell=ell, B=B,
        Bk=Bk, A=A, lambda_struct=system.lambda_struct(N), cond=float(np.linalg.cond(S)),
        cond_modes=cond_m, weights=weights, mode_lu=lu, mode_scale=scale,
        lifting_mismatch=mismatch,
    )


@dataclass(frozen=True, eq=False)
class _ClosedFormLifting:
    gamma: float
    inner: object = None


def assemble_gains(system, gammas, N, M=None):
    """Solve the liftings (or skip them when ``M`` is None) and build gains."""
    if M is None:
        liftings = [_ClosedFormLifting(float(g)) for g in gammas]
    else:
        liftings = [solve_lifting(float(g), system, N, M) for g in gammas]
    return build_gains(system, liftings, N)


def feedback_kernel(gains, x, system=None):
    """omega(x) = -< sum_k Lambda_k A psi(x), l_k > = weights . psi(x)."""
    system = system or gains.system
    Psi = basis_matrix(system, np.atleast_1d(np.asarray(x, dtype=float)), gains.r, "psi")
    val = gains.weights @ Psi
    return val if np.ndim(x) else float(val[0])


def feedback_coefficients(gains, y, system=None):
    """Individual feedback forms u_k(y) = <Lambda_k A Y, l_k>.

    Since ``Lambda_k l_k = m_k`` and ``m_k^T A = e_k^T M^{-1}``, ``u_k`` is
    the k-th coordinate of ``Y`` in the basis ``m_0, ..., m_{2N+1}``.
    """
    system = system or gains.system
    y = np.asarray(y, dtype=float)
    M = len(y) - 1
    x = uniform_grid(M)
    Y = basis_matrix(system, x, gains.r, "psi") @ (trapezoid_weights(M) * y)
    return la.lu_solve(gains.mode_lu, gains.mode_scale * Y)


def feedback_value(gains, y, system=None, rtol=1e-8):
    """Boundary control u(y) for ``y`` sampled on a uniform grid of [0, pi].

    Computed as ``-sum_k u_k(y)`` and as ``int omega y``; the kernel form
    is returned after checking both agree.
    """
    system = system or gains.system
    y = np.asarray(y, dtype=float)
    M = len(y) - 1
    x = uniform_grid(M)
    W = trapezoid_weights(M)
    u_coef = -float(feedback_coefficients(gains, y, system).sum())
    integrand = W * feedback_kernel(gains, x, system) * y
    u_kernel = float(integrand.sum())
    scale = float(np.abs(integrand).sum())
    if abs(u_coef - u_kernel) > rtol * max(scale, abs(u_coef), 1e-300):
        raise FormMismatch(f"coefficient form {u_coef!r} vs kernel form {u_kernel!r}")
    return u_kernel


def write_kernel_csv(path, gains, M):
    """``x,omega`` rows on ``M+1`` uniform nodes, 17 significant digits."""
    x = uniform_grid(M)
    omega = feedback_kernel(gains, x)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,omega\n")
        for xi, wi in zip(x, omega):
            fh.write(f"{xi:.17g},{wi:.17g}\n")
