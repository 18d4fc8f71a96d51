"""Quadrature rules on the reference triangle and the reference edge.

Triangle rules are conical (collapsed) products of a Gauss-Jacobi rule and a
Gauss-Legendre rule. They are not symmetric, but every weight is positive,
every point lies strictly inside the triangle and exactness holds for any
requested degree.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .errors import UnsupportedDegreeError

MAX_TRIANGLE_DEGREE = 20


@dataclass(frozen=True, eq=False)
class QuadRule:
    """Points and weights of a rule exact up to ``exactness_degree``.

    For the triangle, ``points`` has shape ``(nq, 2)`` in reference
    coordinates of ``{x, y >= 0, x + y <= 1}``. For the edge it has shape
    ``(nq,)`` with parameters in ``[0, 1]``.
    """

    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def __len__(self):
        return len(self.weights)


def _gauss_legendre01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadRule:
    """Rule on the reference triangle exact for total degree ``degree``."""
    degree = int(degree)
    if degree < 1 or degree > MAX_TRIANGLE_DEGREE:
        raise UnsupportedDegreeError(
            f"triangle quadrature degree {degree} outside 1..{MAX_TRIANGLE_DEGREE}"
        )
    n = (degree + 2) // 2
    # Gauss-Jacobi for weight (1 - s) on [0, 1] absorbs the collapse Jacobian
    xs, ws = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (xs + 1.0)
    ws = 0.25 * ws
    t, wt = _gauss_legendre01(n)
    S, T = np.meshgrid(s, t, indexing="ij")
    pts = np.column_stack([S.ravel(), ((1.0 - S) * T).ravel()])
    wts = np.outer(ws, wt).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts, degree)


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> QuadRule:
    """Gauss-Legendre rule on ``[0, 1]`` with ``ceil((degree + 1) / 2)`` points."""
    degree = int(degree)
    if degree < 1:
        raise UnsupportedDegreeError(f"edge quadrature degree {degree} < 1")
    n = (degree + 2) // 2
    t, w = _gauss_legendre01(n)
    t.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(t, w, degree)
