"""Manufactured Monge-Ampere problems on the unit square and error norms."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import CapabilityError
from .lagrange import COMPONENTS, DofMap, State

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Problem:
    """Data ``f``, ``g`` and optionally the exact solution.

    All callables take coordinate arrays ``(x, y)``. ``hess_u`` returns an
    array of shape ``x.shape + (2, 2)``, ``grad_u`` one of shape
    ``x.shape + (2,)``.
    """

    name: str
    f: Field
    g: Field
    u: Optional[Field] = None
    grad_u: Optional[Field] = None
    hess_u: Optional[Field] = None
    convex: bool = True

    @property
    def has_exact(self):
        return self.u is not None and self.grad_u is not None and self.hess_u is not None


def _quadratic():
    def u(x, y):
        return 0.5 * (x * x + y * y)

    def grad(x, y):
        return np.stack([x, y], axis=-1)

    def hess(x, y):
        return np.broadcast_to(np.eye(2), np.shape(x) + (2, 2)).copy()

    return Problem("quadratic", lambda x, y: np.ones_like(x), u, u, grad, hess)


def _product_quadratic(c=0.5):
    def u(x, y):
        return 0.5 * (x * x + y * y) + c * x * y

    def grad(x, y):
        return np.stack([x + c * y, y + c * x], axis=-1)

    def hess(x, y):
        return np.broadcast_to(np.array([[1.0, c], [c, 1.0]]), np.shape(x) + (2, 2)).copy()

    f = 1.0 - c * c
    return Problem("product_quadratic", lambda x, y: np.full_like(x, f), u, u, grad, hess)


def _exp_radial():
    def u(x, y):
        return np.exp(0.5 * (x * x + y * y))

    def grad(x, y):
        e = u(x, y)
        return np.stack([x * e, y * e], axis=-1)

    def hess(x, y):
        e = u(x, y)
        return np.stack([np.stack([(1 + x * x) * e, x * y * e], -1),
                         np.stack([x * y * e, (1 + y * y) * e], -1)], -2)

    def f(x, y):
        r2 = x * x + y * y
        return (1.0 + r2) * np.exp(r2)

    return Problem("exp_radial", f, u, u, grad, hess)


def _ball(R=2.0):
    R2 = R * R

    def u(x, y):
        return -np.sqrt(R2 - x * x - y * y)

    def grad(x, y):
        s = np.sqrt(R2 - x * x - y * y)
        return np.stack([x / s, y / s], axis=-1)

    def hess(x, y):
        s = R2 - x * x - y * y
        s32 = s ** 1.5
        return np.stack([np.stack([(s + x * x) / s32, x * y / s32], -1),
                         np.stack([x * y / s32, (s + y * y) / s32], -1)], -2)

    def f(x, y):
        return R2 / (R2 - x * x - y * y) ** 2

    return Problem("ball", f, u, u, grad, hess)


BUILTINS = {
    "quadratic": _quadratic,
    "product_quadratic": _product_quadratic,
    "exp_radial": _exp_radial,
    "ball": _ball,
}


def builtin_problem(name: str) -> Problem:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(
            f"unknown problem {name!r}; available: {', '.join(sorted(BUILTINS))}"
        ) from None


@dataclass(frozen=True)
class ErrorReport:
    err_u_L2: float
    err_u_H1: float
    err_u_H2broken: float
    err_sigma_L2: float
    err_sigma_H1: float
    err_lambda_L2boundary: float

    @property
    def total(self):
        """Computable surrogate of the error in the product norm."""
        return float(np.sqrt(self.err_sigma_H1 ** 2 + self.err_u_H2broken ** 2
                             + self.err_lambda_L2boundary ** 2))


def compute_errors(state: State, dofmap: DofMap, problem: Problem, qdegree=None) -> ErrorReport:
    """Errors of ``state`` against the exact solution, by quadrature.

    The default quadrature degree is ``3k + 2``. The H^2 norm of u is broken
    over cells; sigma errors are measured against the exact Hessian.
    """
    if not problem.has_exact:
        raise CapabilityError(f"problem {problem.name!r} has no exact solution")
    k = dofmap.degree
    qd = qdegree or 3 * k + 2
    tab = dofmap.cells_tab(qd, order=2)
    X, Y = tab.x[..., 0], tab.x[..., 1]
    w = tab.wdet

    eu = problem.u(X, Y) - tab.values(state.u)
    egrad = problem.grad_u(X, Y) - tab.grads(state.u)
    H = problem.hess_u(X, Y)
    ehess = H - tab.hessians(state.u)
    l2 = np.sum(w * eu ** 2)
    h1s = np.sum(w[..., None] * egrad ** 2)
    h2s = np.sum(w[..., None, None] * ehess ** 2)

    # gradient of the exact sigma = D^2 u by central differences of hess_u
    comps = dofmap.sigma_components(state.sigma)
    s_l2 = s_h1s = 0.0
    dH = _hessian_gradient(problem, X, Y)
    for c, (i, j) in enumerate(COMPONENTS):
        es = H[..., i, j] - tab.values(comps[c])
        eg = dH[..., i, j, :] - tab.grads(comps[c])
        s_l2 += np.sum(w * es ** 2)
        s_h1s += np.sum(w[..., None] * eg ** 2)

    btab = dofmap.boundary_tab(qd)
    lam_full = np.zeros(dofmap.num_dofs)
    lam_full[dofmap.boundary_dofs] = state.lam
    el = problem.u(btab.x[..., 0], btab.x[..., 1]) - btab.values(lam_full)
    lam_l2 = np.sum(btab.wds * el ** 2)

    return ErrorReport(
        err_u_L2=float(np.sqrt(l2)),
        err_u_H1=float(np.sqrt(l2 + h1s)),
        err_u_H2broken=float(np.sqrt(l2 + h1s + h2s)),
        err_sigma_L2=float(np.sqrt(s_l2)),
        err_sigma_H1=float(np.sqrt(s_l2 + s_h1s)),
        err_lambda_L2boundary=float(np.sqrt(lam_l2)),
    )


def _hessian_gradient(problem, X, Y, eps=1e-5):
    """Gradient of the exact Hessian, shape ``X.shape + (2, 2, 2)``.

    Fourth-order central differences; truncation error ~eps^4 is far below
    any discretisation error measured here.
    """
    def d(axis):
        e = np.zeros(2)
        e[axis] = eps
        f = lambda s: problem.hess_u(X + s * e[0], Y + s * e[1])
        return (8.0 * (f(1) - f(-1)) - (f(2) - f(-2))) / (12.0 * eps)

    return np.stack([d(0), d(1)], axis=-1)
