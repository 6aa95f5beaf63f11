"""Spectrum and Riesz basis of the nonlocal operator ``-y'' - c y``.

The operator acts on H^2(0, pi) functions with ``y(0) = 0`` and
``y'(0) + y'(pi) + alpha y(pi) = 0``. Its eigenvalues come in two families,
``(2k+1)^2 - c`` and ``(2 beta_k)^2 - c`` where ``beta_k`` solves
``cot(beta pi) = -alpha / (2 beta)`` inside ``(k + 1/2, k + 1)``.

The eigenfunctions alone are not a basis, so the module builds the Riesz
basis ``phi_j`` (pairs of eigenfunctions and their scaled difference) and
its bi-orthonormal partner ``psi_j`` built from adjoint eigenfunctions.

All quantities near the half-integers are handled through the offset
``delta_k = beta_k - k - 1/2`` which is solved for directly; this keeps the
root, the difference quotient ``(w_{k2} - w_{k1}) / (2 delta_k)`` and the
normalisation constants accurate for tiny ``alpha`` and large ``k``.
"""
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import DegenerateNormalization, IndexOutOfRange, NoRootInBracket

BISECTION_STEPS = 60
NEWTON_STEPS = 50


@dataclass(frozen=True)
class SpectralParams:
    alpha: float
    c: float
    tol_root: float = 1e-12

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.tol_root > 0:
            raise ValueError(f"tol_root must be positive, got {self.tol_root}")


@dataclass(frozen=True, eq=False)
class SpectralSystem:
    """Solved spectral data for the first ``n_pairs`` eigenvalue pairs.

    ``lam[2k] = (2k+1)^2 - c`` and ``lam[2k+1] = (2 beta[k])^2 - c``;
    basis functions with index ``j < 2 * n_pairs`` can be evaluated.
    """

    params: SpectralParams
    n_pairs: int
    beta: np.ndarray
    delta: np.ndarray
    lam: np.ndarray
    C2: np.ndarray

    @property
    def n_modes(self):
        return 2 * self.n_pairs

    @property
    def kappa(self):
        """Off-diagonal couplings ``2 beta_k + 2k + 1``."""
        k = np.arange(self.n_pairs)
        return 2.0 * self.beta + 2.0 * k + 1.0

    def lambda_struct(self, N):
        """Projected operator matrix on the first ``2N+2`` coefficients.

        Diagonal ``lam_j``, entry ``(2k, 2k+1)`` equal to ``kappa_k``.
        """
        r = 2 * N + 2
        self._check_index(r - 1)
        L = np.diag(self.lam[:r].copy())
        kap = self.kappa
        for k in range(N + 1):
            L[2 * k, 2 * k + 1] = kap[k]
        return L

    def _check_index(self, j):
        if j < 0 or j >= self.n_modes:
            raise IndexOutOfRange(
                f"basis index {j} outside capacity 0..{self.n_modes - 1}"
            )


def _root_function(d, k, alpha):
    # 2 beta sin(pi d) - alpha cos(pi d); zero iff cot(beta pi) = -alpha / (2 beta)
    beta = k + 0.5 + d
    return 2.0 * beta * np.sin(np.pi * d) - alpha * np.cos(np.pi * d)


def _root_derivative(d, k, alpha):
    beta = k + 0.5 + d
    return (2.0 * np.sin(np.pi * d) + 2.0 * np.pi * beta * np.cos(np.pi * d)
            + alpha * np.pi * np.sin(np.pi * d))


def _residual(k, d, alpha):
    # |cot(beta pi) + alpha/(2 beta)| with cot(beta pi) = -tan(pi delta)
    beta = k + 0.5 + d
    return abs(alpha / (2.0 * beta) - np.tan(np.pi * d))


def _scaled_residual(k, d, alpha):
    # pole-free form; stays well conditioned when delta -> 1/2 (large alpha)
    return abs(_root_function(d, k, alpha)) / (2.0 * (k + 0.5 + d) + alpha)


def solve_delta(k, params):
    """Return ``delta_k`` in ``(0, 1/2)``; see :func:`solve_beta`."""
    if k < 0:
        raise IndexOutOfRange(f"k must be nonnegative, got {k}")
    alpha = params.alpha
    # g(0) = -alpha < 0 and g(1/2) = 2(k+1) > 0, g increasing on [0, 1/2]
    lo, hi = 0.0, 0.5
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if _root_function(mid, k, alpha) < 0.0:
            lo = mid
        else:
            hi = mid
    d = 0.5 * (lo + hi)
    for _ in range(NEWTON_STEPS):
        step = _root_function(d, k, alpha) / _root_derivative(d, k, alpha)
        d_new = d - step
        if not lo <= d_new <= hi:
            break
        d = d_new
        if abs(step) <= 1e-17 * max(d, 1e-300):
            break
    if not 0.0 < d < 0.5 or _scaled_residual(k, d, alpha) > params.tol_root:
        raise NoRootInBracket(
            f"k={k}, alpha={alpha}: residual {_scaled_residual(k, d, alpha):.3e} "
            f"above tolerance {params.tol_root:.1e}"
        )
    return d


def solve_beta(k, params):
    """Root ``beta_k`` of ``cot(beta pi) = -alpha/(2 beta)`` in ``(k+1/2, k+1)``.

    Bisection on the bracket followed by a Newton polish; deterministic.
    """
    return k + 0.5 + solve_delta(k, params)


def normalization_constant(k, params, delta=None):
    """``C_{k2}`` making ``<w_{k2}, v_{k2}> = 1``.

    Closed form of ``int_0^pi sin(sx) [sin(sx) + (s/alpha) cos(sx)] dx`` with
    ``s = 2 beta_k``, written in terms of ``delta_k`` (``sin(4 pi beta) =
    sin(4 pi delta)``).
    """
    if delta is None:
        delta = solve_delta(k, params)
    beta = k + 0.5 + delta
    integral = (0.5 * np.pi - np.sin(4.0 * np.pi * delta) / (8.0 * beta)
                + np.sin(2.0 * np.pi * delta) ** 2 / (2.0 * params.alpha))
    if abs(integral) < 1e-12:
        raise DegenerateNormalization(
            f"k={k}: normalisation integral {integral:.3e} vanishes"
        )
    return 1.0 / integral


def eigenvalues(N, params):
    """``lambda_0 .. lambda_{2N+3}`` in ascending order."""
    if N < 0:
        raise ValueError(f"N must be nonnegative, got {N}")
    lam = np.empty(2 * N + 4)
    for k in range(N + 2):
        lam[2 * k] = (2 * k + 1) ** 2 - params.c
        lam[2 * k + 1] = (2.0 * solve_beta(k, params)) ** 2 - params.c
    return lam


def choose_mode_count(rho, params):
    """Smallest ``N >= 0`` with ``lambda_{2N+2} > rho``.

    Only even-index eigenvalues enter, so no root solve is needed. Modes
    with index ``<= 2N+1`` above ``rho`` are still controlled.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    N = 0
    while (2 * N + 3) ** 2 - params.c <= rho:
        N += 1
    return N


def build_system(params, n_pairs):
    """Solve the first ``n_pairs`` roots and assemble a :class:`SpectralSystem`."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    delta = np.array([solve_delta(k, params) for k in range(n_pairs)])
    k = np.arange(n_pairs)
    beta = k + 0.5 + delta
    lam = np.empty(2 * n_pairs)
    lam[0::2] = (2 * k + 1) ** 2 - params.c
    lam[1::2] = (2.0 * beta) ** 2 - params.c
    C2 = np.array([normalization_constant(i, params, delta[i]) for i in range(n_pairs)])
    return SpectralSystem(params=params, n_pairs=n_pairs, beta=beta, delta=delta,
                          lam=lam, C2=C2)


def _sin_d(s, x, d):
    return s ** d * np.sin(s * x + 0.5 * np.pi * d)


def _cos_d(s, x, d):
    return s ** d * np.cos(s * x + 0.5 * np.pi * d)


def _phi_odd(k, delta, x, d):
    # (sin(s2 x) - sin(s1 x)) / (2 delta) = cos(a x) sin(delta x) / delta
    a = 2 * k + 1 + delta
    out = np.zeros_like(x)
    for i in range(d + 1):
        p = _cos_d(a, x, i)
        m = d - i
        s = delta ** (m - 1) * np.sin(delta * x + 0.5 * np.pi * m)
        out = out + comb(d, i) * p * s
    return out


def eval_basis(j, x, system, which="phi", deriv=0):
    """Evaluate a basis function (or its derivative, ``deriv <= 2``) at ``x``.

    ``which`` selects ``phi`` (Riesz basis), ``psi`` (bi-orthonormal
    system), ``w`` (eigenfunctions) or ``v`` (adjoint eigenfunctions). For
    ``w`` and ``v`` an even ``j = 2k`` picks the ``(2k+1)^2`` family and an
    odd ``j = 2k+1`` the ``(2 beta_k)^2`` family.
    """
    system._check_index(j)
    x = np.asarray(x, dtype=float)
    k, odd = divmod(j, 2)
    alpha = system.params.alpha
    n = 2 * k + 1
    delta = system.delta[k]
    s = 2.0 * system.beta[k]

    def w1():
        return _sin_d(n, x, deriv)

    def w2():
        return _sin_d(s, x, deriv)

    def v1():
        return (2.0 / np.pi) * (_sin_d(n, x, deriv) - (n / alpha) * _cos_d(n, x, deriv))

    def v2():
        return system.C2[k] * (_sin_d(s, x, deriv) + (s / alpha) * _cos_d(s, x, deriv))

    if which == "w":
        return w2() if odd else w1()
    if which == "v":
        return v2() if odd else v1()
    if which == "phi":
        return _phi_odd(k, delta, x, deriv) if odd else w1()
    if which == "psi":
        return 2.0 * delta * v2() if odd else v2() + v1()
    raise ValueError(f"unknown basis family {which!r}")


def basis_matrix(system, x, count, which="phi", deriv=0):
    """Rows ``0..count-1`` of the requested family sampled at ``x``."""
    return np.array([eval_basis(j, x, system, which, deriv) for j in range(count)])


def psi_derivative_at(j, x, system):
    """``psi_j'(x)``, analytic; ``x`` is typically 0 or pi."""
    return float(eval_basis(j, float(x), system, "psi", deriv=1))
