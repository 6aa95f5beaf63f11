# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-stepping kernel; mirrors ``_kernels_py.march``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt, isfinite

cnp.import_array()

cdef enum:
    NL_ZERO = 0
    NL_POWER = 1
    NL_TABLE = 2


cdef inline double _interp(double v, double[::1] ty, double[::1] tf) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = ty.shape[0] - 1, mid
    if v <= ty[0]:
        return tf[0]
    if v >= ty[hi]:
        return tf[hi]
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if ty[mid] <= v:
            lo = mid
        else:
            hi = mid
    return tf[lo] + (tf[hi] - tf[lo]) * (v - ty[lo]) / (ty[hi] - ty[lo])


def march(double[::1] y0, double[::1] dl, double[::1] d, double[::1] du,
          double[::1] a_row, long[::1] r_idx, double[::1] r_val,
          double[:, ::1] Zw, double[:, ::1] capinv, double[::1] quad_w,
          double dt, double h, double c, double theta,
          long nsteps, long stride, int nl_kind, double nl_coeff, double nl_m,
          double[::1] tab_y, double[::1] tab_f, double cap):
    cdef Py_ssize_t n = y0.shape[0]
    cdef Py_ssize_t i, k
    cdef long step = 0
    cdef long nsave = nsteps // stride + 2
    cdef Py_ssize_t saved = 1
    cdef bint blowup = False
    cdef double inv_h2 = 1.0 / (h * h), inv_dt = 1.0 / dt, expl = 1.0 - theta
    cdef double s0, s1, t0, t1, nrm, lap, v, piv

    snaps_arr = np.zeros((nsave, n))
    norms_arr = np.zeros(nsave)
    cdef double[:, ::1] snaps = snaps_arr
    cdef double[::1] norms = norms_arr
    cdef double[::1] y = np.array(y0, dtype=np.float64)
    cdef double[::1] b = np.zeros(n)
    cdef double[::1] cp = np.zeros(n)
    cdef double[::1] inv_den = np.zeros(n)

    # Thomas factorisation of the tridiagonal part
    piv = d[0]
    if fabs(piv) < 1e-300:
        raise ZeroDivisionError("zero pivot in tridiagonal factorisation")
    inv_den[0] = 1.0 / piv
    cp[0] = du[0] * inv_den[0]
    for i in range(1, n):
        piv = d[i] - dl[i - 1] * cp[i - 1]
        if fabs(piv) < 1e-300:
            raise ZeroDivisionError("zero pivot in tridiagonal factorisation")
        inv_den[i] = 1.0 / piv
        if i < n - 1:
            cp[i] = du[i] * inv_den[i]

    nrm = 0.0
    for i in range(n):
        snaps[0, i] = y[i]
        nrm += quad_w[i] * y[i] * y[i]
    norms[0] = sqrt(nrm)

    with nogil:
        for step in range(1, nsteps + 1):
            b[0] = 0.0
            b[n - 1] = 0.0
            for i in range(1, n - 1):
                lap = (y[i - 1] - 2.0 * y[i] + y[i + 1]) * inv_h2
                b[i] = inv_dt * y[i] + expl * (lap + c * y[i])
                if nl_kind == NL_POWER:
                    b[i] += nl_coeff * pow(fabs(y[i]), nl_m)
                elif nl_kind == NL_TABLE:
                    b[i] += _interp(y[i], tab_y, tab_f)
            # forward sweep, then back substitution (result in b)
            b[0] = b[0] * inv_den[0]
            for i in range(1, n):
                b[i] = (b[i] - dl[i - 1] * b[i - 1]) * inv_den[i]
            for i in range(n - 2, -1, -1):
                b[i] = b[i] - cp[i] * b[i + 1]
            s0 = 0.0
            for i in range(n):
                s0 += a_row[i] * b[i]
            s1 = 0.0
            for k in range(r_idx.shape[0]):
                s1 += r_val[k] * b[r_idx[k]]
            t0 = capinv[0, 0] * s0 + capinv[0, 1] * s1
            t1 = capinv[1, 0] * s0 + capinv[1, 1] * s1
            nrm = 0.0
            for i in range(n):
                v = b[i] - Zw[0, i] * t0 - Zw[1, i] * t1
                y[i] = v
                nrm += quad_w[i] * v * v
            nrm = sqrt(nrm)
            if not isfinite(nrm) or nrm > cap:
                for i in range(n):
                    snaps[saved, i] = y[i]
                norms[saved] = nrm
                saved += 1
                blowup = True
                break
            if step % stride == 0:
                for i in range(n):
                    snaps[saved, i] = y[i]
                norms[saved] = nrm
                saved += 1
    return snaps_arr, norms_arr, saved, step, blowup
