"""Shared test utilities: random polynomials with exact derivatives."""
import numpy as np
from numpy.polynomial import polynomial as P

from mafem.lagrange import interpolate


class Poly2:
    """Bivariate polynomial ``sum c[i, j] x^i y^j`` with exact derivatives."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    @classmethod
    def random(cls, rng, degree):
        c = rng.normal(size=(degree + 1, degree + 1))
        i, j = np.indices(c.shape)
        c[i + j > degree] = 0.0
        return cls(c)

    def __call__(self, x, y):
        return P.polyval2d(x, y, self.c)

    def dx(self):
        return Poly2(P.polyder(self.c, axis=0))

    def dy(self):
        return Poly2(P.polyder(self.c, axis=1))

    def hessian_interpolant(self, dofmap):
        """Sigma_h coefficients of the nodal interpolant of ``D^2 p``."""
        xx, xy, yy = self.dx().dx(), self.dx().dy(), self.dy().dy()
        return np.concatenate([interpolate(f, dofmap, "V") for f in (xx, xy, xy, yy)])


def interior_vector(rng, dofmap):
    v = np.zeros(dofmap.num_dofs)
    v[dofmap.interior_dofs] = rng.normal(size=len(dofmap.interior_dofs))
    return v
