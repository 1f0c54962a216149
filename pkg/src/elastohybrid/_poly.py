"""Dense bivariate polynomials stored as coefficient grids.

A scalar polynomial is an array ``c`` of shape ``(D, D)`` with
``p(x, y) = sum_{a, b} c[a, b] * x**a * y**b``.  Vector/tensor valued
polynomials simply carry leading axes, e.g. ``(ncomp, D, D)``.
All polynomials used in the package live on a common grid size ``DEG``.
"""

import numpy as np
from scipy.signal import convolve2d

DEG = 9  # max degree + 1 in each variable; enough for every space we build


def zero():
    return np.zeros((DEG, DEG))


def mono(a, b, coeff=1.0):
    c = zero()
    c[a, b] = coeff
    return c


def const(value):
    return mono(0, 0, value)


X = mono(1, 0)
Y = mono(0, 1)
ONE = const(1.0)


def mul(*polys):
    out = polys[0]
    for p in polys[1:]:
        full = convolve2d(out, p)
        if np.any(full[DEG:, :]) or np.any(full[:, DEG:]):
            raise OverflowError("polynomial product exceeds the coefficient grid")
        out = full[:DEG, :DEG]
    return out


def power(p, k):
    out = ONE.copy()
    for _ in range(k):
        out = mul(out, p)
    return out


def deriv(c, axis):
    """Partial derivative along ``axis`` (0 -> x, 1 -> y) of the trailing grid."""
    out = np.zeros_like(c)
    k = np.arange(1, DEG)
    if axis == 0:
        out[..., :-1, :] = c[..., 1:, :] * k[:, None]
    else:
        out[..., :, :-1] = c[..., :, 1:] * k[None, :]
    return out


def degree(c):
    """Total degree of a (possibly stacked) polynomial; -1 for zero."""
    nz = np.argwhere(np.abs(c.reshape(-1, DEG, DEG)).max(axis=0) > 0)
    if nz.size == 0:
        return -1
    return int(nz.sum(axis=1).max())


def power_table(points):
    """Monomial table ``T[q, a, b] = x_q**a * y_q**b`` for points of shape (..., 2)."""
    pts = np.asarray(points, dtype=float)
    xp = pts[..., 0, None] ** np.arange(DEG)
    yp = pts[..., 1, None] ** np.arange(DEG)
    return xp[..., :, None] * yp[..., None, :]


def evaluate(coeffs, points):
    """Evaluate stacked polynomials ``coeffs[..., D, D]`` at ``points[q, 2]``.

    Returns an array of shape ``(nq,) + coeffs.shape[:-2]``.
    """
    table = power_table(points)
    return np.tensordot(table, coeffs, axes=([-2, -1], [-2, -1]))


def gradient(coeffs):
    """Stack d/dx and d/dy along a new trailing axis (before the grid)."""
    return np.stack([deriv(coeffs, 0), deriv(coeffs, 1)], axis=-3)
