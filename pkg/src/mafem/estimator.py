"""Residual indicators, data oscillation, effectivity and Dorfler marking.

Per cell K the squared indicator is the sum of

* ``term1 = |f_h - A_h : D^2 u_h|_K^2``
* ``term2 = |sigma_h - D^2 u_h|_K^2``
* ``term3 = |f_h - det sigma_h - A_h : D^2 u_h|_K^2``
* ``term4 = sum over boundary edges E of K of |g_h - lambda_h|_E^2``

where ``A_h`` is a computable stand-in for ``cof D^2 u``: ``cof(D^2 u_h)``
(``cofactor_source="hessian"``) or ``cof(sigma_h)`` (``"sigma"``). With the
former, ``A_h : D^2 u_h = 2 det D^2 u_h``.
"""
from dataclasses import dataclass, replace

import numpy as np

from .assembly import cof, det2, sigma_at_quadrature
from .errors import ParameterError, UndefinedEffectivityError
from .lagrange import DofMap, State, interpolate
from .problems import ErrorReport, Problem

COFACTOR_SOURCES = ("hessian", "sigma")


@dataclass(frozen=True, eq=False)
class IndicatorReport:
    term1: np.ndarray
    term2: np.ndarray
    term3: np.ndarray
    term4: np.ndarray
    zeta_K2: np.ndarray

    @property
    def theta_K2(self):
        return self.term1 + self.term2 + self.term3 + self.term4

    @property
    def theta_K(self):
        return np.sqrt(self.theta_K2)

    @property
    def theta(self):
        return float(np.sqrt(np.sum(self.theta_K2)))

    @property
    def zeta_K(self):
        return np.sqrt(self.zeta_K2)

    @property
    def zeta(self):
        return float(np.sqrt(np.sum(self.zeta_K2)))

    def scaled(self, factor):
        """Report with every indicator term multiplied by ``factor``."""
        return replace(self, term1=factor * self.term1, term2=factor * self.term2,
                       term3=factor * self.term3, term4=factor * self.term4)


def _per_cell_boundary(dofmap, btab, integrand):
    vals = np.sum(btab.wds * integrand, axis=1)
    return np.bincount(btab.cell, weights=vals, minlength=dofmap.mesh.num_cells)


def _boundary_field(dofmap, lvec):
    full = np.zeros(dofmap.num_dofs)
    full[dofmap.boundary_dofs] = lvec
    return full


def data_oscillation(problem: Problem, dofmap: DofMap, qdegree=None):
    """Per-cell ``zeta_K^2`` and global ``zeta`` against the exact data."""
    qd = qdegree or 3 * dofmap.degree
    tab = dofmap.cells_tab(qd)
    f_h = interpolate(problem.f, dofmap, "V")
    ef = problem.f(tab.x[..., 0], tab.x[..., 1]) - tab.values(f_h)
    z2 = np.sum(tab.wdet * ef ** 2, axis=1)
    btab = dofmap.boundary_tab(qd)
    g_h = _boundary_field(dofmap, interpolate(problem.g, dofmap, "L"))
    eg = problem.g(btab.x[..., 0], btab.x[..., 1]) - btab.values(g_h)
    z2 = z2 + _per_cell_boundary(dofmap, btab, eg ** 2)
    return z2, float(np.sqrt(np.sum(z2)))


def local_indicators(state: State, dofmap: DofMap, problem: Problem,
                     cofactor_source="hessian", quadrature_bump=0) -> IndicatorReport:
    if cofactor_source not in COFACTOR_SOURCES:
        raise ParameterError(f"cofactor_source must be one of {COFACTOR_SOURCES}")
    qd = 3 * dofmap.degree + int(quadrature_bump)
    tab = dofmap.cells_tab(qd, order=2)
    w = tab.wdet

    f_h = tab.values(interpolate(problem.f, dofmap, "V"))
    H = tab.hessians(state.u)
    S = sigma_at_quadrature(state.sigma, dofmap, tab)
    A = cof(H) if cofactor_source == "hessian" else cof(S)
    AH = np.einsum("cqij,cqij->cq", A, H)

    term1 = np.sum(w * (f_h - AH) ** 2, axis=1)
    term2 = np.sum(w * np.sum((S - H) ** 2, axis=(-1, -2)), axis=1)
    term3 = np.sum(w * (f_h - det2(S) - AH) ** 2, axis=1)

    btab = dofmap.boundary_tab(qd)
    g_h = interpolate(problem.g, dofmap, "L")
    diff = btab.values(_boundary_field(dofmap, g_h - state.lam))
    term4 = _per_cell_boundary(dofmap, btab, diff ** 2)

    z2, _ = data_oscillation(problem, dofmap, qd)
    return IndicatorReport(term1, term2, term3, term4, z2)


def residual_functional(state: State, dofmap: DofMap, problem: Problem, tau, v, mu):
    """Residual of the discrete system applied to a test triple ``(tau, v, mu)``.

    ``R = (f - det sigma_h, v) - [(sigma_h, tau) + (div tau, D u_h)
    - <D u_h, tau n>] + <g_h - lambda_h, mu>``, evaluated by quadrature
    directly from the fields (no assembled matrices). ``v`` holds V_h
    coefficients, ``tau`` Sigma_h coefficients and ``mu`` L_h coefficients.
    """
    k = dofmap.degree
    tab = dofmap.cells_tab(3 * k)
    w = tab.wdet
    S = sigma_at_quadrature(state.sigma, dofmap, tab)
    T = sigma_at_quadrature(tau, dofmap, tab)
    f = problem.f(tab.x[..., 0], tab.x[..., 1])
    r2 = np.sum(w * (f - det2(S)) * tab.values(v))

    Du = tab.grads(state.u)
    comps = dofmap.sigma_components(tau)
    # row divergence: (div tau)_i = sum_j d_j tau_ij
    dT = np.stack([tab.grads(comps[c]) for c in range(4)], axis=-2)
    dT = dT.reshape(dT.shape[:2] + (2, 2, 2))
    div = np.einsum("cqijj->cqi", dT)
    r1 = np.sum(w * (np.einsum("cqij,cqij->cq", S, T) + np.einsum("cqi,cqi->cq", div, Du)))

    btab = dofmap.boundary_tab(3 * k)
    bcomps = np.stack([btab.values(comps[c]) for c in range(4)], axis=-1)
    Tn = np.einsum("fqij,fj->fqi", bcomps.reshape(bcomps.shape[:2] + (2, 2)), btab.normal)
    bDu = np.einsum("fb,fqbi->fqi", state.u[btab.dofs], btab.dphi)
    r1 -= np.sum(btab.wds * np.einsum("fqi,fqi->fq", bDu, Tn))

    g_h = interpolate(problem.g, dofmap, "L")
    r3 = np.sum(btab.wds * btab.values(_boundary_field(dofmap, g_h - state.lam))
                * btab.values(_boundary_field(dofmap, mu)))
    return float(r2 - r1 + r3)


def triple_norm(dofmap: DofMap, tau, v, mu):
    """``(|tau|_1^2 + |v|_1^2 + |mu|_{0,dOmega}^2)^{1/2}`` by quadrature."""
    k = dofmap.degree
    tab = dofmap.cells_tab(2 * k)

    def h1sq(c):
        return np.sum(tab.wdet * (tab.values(c) ** 2 + np.sum(tab.grads(c) ** 2, axis=-1)))

    total = sum(h1sq(c) for c in dofmap.sigma_components(tau)) + h1sq(v)
    btab = dofmap.boundary_tab(2 * k)
    total += np.sum(btab.wds * btab.values(_boundary_field(dofmap, mu)) ** 2)
    return float(np.sqrt(total))


def effectivity(report: IndicatorReport, errors, zero_tol=1e-8):
    """``Theta / |U - U_h|``; raises when the error is numerically zero."""
    total = errors.total if isinstance(errors, ErrorReport) else float(errors)
    if not total > zero_tol:
        raise UndefinedEffectivityError(f"error norm {total:.3e} is zero to tolerance")
    return report.theta / total


def mark_dorfler(report, theta: float):
    """Smallest set of largest-indicator cells carrying ``theta^2`` of ``Theta^2``.

    ``report`` is an :class:`IndicatorReport` or an array of ``Theta_K^2``.
    Ties are broken by ascending cell index.
    """
    if not 0.0 < theta <= 1.0:
        raise ParameterError(f"Dorfler parameter must lie in (0, 1], got {theta}")
    eta2 = report.theta_K2 if isinstance(report, IndicatorReport) else np.asarray(report)
    if eta2.size == 0:
        raise ParameterError("empty indicator report")
    order = np.lexsort((np.arange(eta2.size), -eta2))
    csum = np.cumsum(eta2[order])
    target = theta * theta * csum[-1]
    n = int(np.searchsorted(csum, target, side="left")) + 1
    return set(order[:n].tolist())
