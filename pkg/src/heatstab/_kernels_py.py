"""Pure-Python time-stepping kernel (numpy + LAPACK tridiagonal routines).

Same signature and semantics as the compiled ``_kernels.march``.
"""
import numpy as np
from scipy.linalg.lapack import dgttrf, dgttrs

NL_ZERO, NL_POWER, NL_TABLE = 0, 1, 2


def nonlinear_term(y, kind, coeff, m, tab_y, tab_f):
    if kind == NL_ZERO:
        return np.zeros_like(y)
    if kind == NL_POWER:
        return coeff * np.abs(y) ** m
    return np.interp(y, tab_y, tab_f)


def march(y0, dl, d, du, a_row, r_idx, r_val, Zw, capinv, quad_w,
          dt, h, c, theta, nsteps, stride, nl_kind, nl_coeff, nl_m,
          tab_y, tab_f, cap):
    """Advance the theta-scheme ``nsteps`` steps from ``y0``.

    The implicit matrix is ``T + e_0 a^T + e_M r^T`` with ``T`` tridiagonal
    (``dl, d, du``) and ``r`` sparse (``r_idx, r_val``); ``Zw`` holds
    ``T^{-1} [e_0, e_M]`` as two rows and ``capinv`` the inverse 2x2
    capacitance matrix. Rows 0 and M have zero right-hand side.

    Returns ``(snaps, norms, n_saved, steps_done, blowup)``.
    """
    n = y0.shape[0]
    nsave = nsteps // stride + 2
    snaps = np.zeros((nsave, n))
    norms = np.zeros(nsave)
    dl_f, d_f, du_f, du2, ipiv, info = dgttrf(dl, d, du)
    if info != 0:
        raise ZeroDivisionError(f"tridiagonal factorisation failed (info={info})")
    y = np.array(y0, dtype=float)
    snaps[0] = y
    norms[0] = np.sqrt(np.dot(quad_w, y * y))
    saved = 1
    inv_h2 = 1.0 / (h * h)
    inv_dt = 1.0 / dt
    expl = 1.0 - theta
    b = np.zeros(n)
    step = 0
    blowup = False
    for step in range(1, nsteps + 1):
        inner = y[1:-1]
        lap = (y[:-2] - 2.0 * inner + y[2:]) * inv_h2
        b[1:-1] = inv_dt * inner + expl * (lap + c * inner)
        if nl_kind != NL_ZERO:
            b[1:-1] += nonlinear_term(inner, nl_kind, nl_coeff, nl_m, tab_y, tab_f)
        b[0] = 0.0
        b[-1] = 0.0
        z, info = dgttrs(dl_f, d_f, du_f, du2, ipiv, b)
        s0 = np.dot(a_row, z)
        s1 = np.dot(r_val, z[r_idx])
        t0 = capinv[0, 0] * s0 + capinv[0, 1] * s1
        t1 = capinv[1, 0] * s0 + capinv[1, 1] * s1
        y = z - Zw[0] * t0 - Zw[1] * t1
        nrm = np.sqrt(np.dot(quad_w, y * y))
        if not np.isfinite(nrm) or nrm > cap:
            snaps[saved] = y
            norms[saved] = nrm
            saved += 1
            blowup = True
            break
        if step % stride == 0:
            snaps[saved] = y
            norms[saved] = nrm
            saved += 1
    return snaps, norms, saved, step, blowup
