"""Quadrature rules on the reference triangle, reference square and edges."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .exceptions import UnsupportedError

MAX_DEGREE = 20


@dataclass(frozen=True)
class QuadratureRule:
    """Points and positive weights exact for polynomials up to ``exact_degree``."""

    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    def __len__(self):
        return len(self.weights)


def _check(degree):
    if degree < 0:
        raise UnsupportedError(f"quadrature degree must be non-negative, got {degree}")
    if degree > MAX_DEGREE:
        raise UnsupportedError(f"quadrature degree {degree} exceeds the supported maximum {MAX_DEGREE}")


def _npoints(degree):
    return max(1, int(np.ceil((degree + 1) / 2)))


@lru_cache(maxsize=None)
def edge_rule(degree):
    """Gauss-Legendre rule on [-1, 1] exact up to ``degree``."""
    _check(degree)
    n = _npoints(degree)
    t, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(t[:, None], w, 2 * n - 1)


@lru_cache(maxsize=None)
def _square_rule(degree):
    n = _npoints(degree)
    t, w = np.polynomial.legendre.leggauss(n)
    X, Y = np.meshgrid(t, t, indexing="ij")
    W = np.outer(w, w)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return QuadratureRule(pts, W.ravel(), 2 * n - 1)


@lru_cache(maxsize=None)
def _triangle_rule(degree):
    # Collapsed (Duffy) rule: Gauss-Jacobi with weight (1 + a) in the collapsed direction.
    n = _npoints(degree)
    a, wa = roots_jacobi(n, 0.0, 1.0)
    b, wb = np.polynomial.legendre.leggauss(n)
    s = (1.0 + a) / 2.0  # s in (0, 1), weight (1 + a) absorbs the Jacobian
    t = (1.0 + b) / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    x = S * (1.0 - T)
    y = S * T
    W = np.outer(wa, wb) / 8.0
    pts = np.column_stack([x.ravel(), y.ravel()])
    return QuadratureRule(pts, W.ravel(), 2 * n - 1)


def cell_rule(cell_type, degree):
    """Rule on the reference cell of ``cell_type`` ('tri' or 'quad')."""
    _check(degree)
    if cell_type == "tri":
        return _triangle_rule(degree)
    if cell_type == "quad":
        return _square_rule(degree)
    raise UnsupportedError(f"unknown cell type {cell_type!r}")
