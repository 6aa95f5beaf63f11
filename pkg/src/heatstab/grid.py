"""Uniform grid, trapezoid weights and the nonlocal boundary stencil."""
import numpy as np


def trapezoid_weights(M, a=0.0, b=np.pi):
    """Weights of the composite trapezoid rule on M+1 uniform nodes."""
    h = (b - a) / M
    w = np.full(M + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


def uniform_grid(M, a=0.0, b=np.pi):
    return np.linspace(a, b, M + 1)


def bc_stencil(M, alpha):
    """Three-point one-sided stencil of ``y'(0) + y'(pi) + alpha y(pi)``.

    Returns node indices and weights; second order in ``h = pi / M``.
    """
    h = np.pi / M
    idx = np.array([0, 1, 2, M - 2, M - 1, M])
    val = np.array([-3.0, 4.0, -1.0, 1.0, -4.0, 3.0]) / (2.0 * h)
    val[-1] += alpha
    return idx, val


def bc_residual(y, alpha):
    idx, val = bc_stencil(len(y) - 1, alpha)
    return float(np.dot(val, np.asarray(y)[idx]))
