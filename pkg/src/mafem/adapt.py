"""Uniform convergence studies and the solve-estimate-mark-refine loop."""
import io
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .assembly import reconstruct_sigma
from .errors import MAFEMError, ParameterError, UndefinedEffectivityError
from .estimator import IndicatorReport, effectivity, local_indicators, mark_dorfler
from .lagrange import DofMap, State, build_dofmap
from .mesh import Mesh, bisect, refine_uniform, shape_metrics, unit_square_mesh
from .newton import NewtonOptions, newton_solve
from .problems import Problem, compute_errors

log = logging.getLogger(__name__)

CSV_HEADER = ("level,ndof,h_max,err_u_l2,err_u_h1,err_u_h2b,err_sigma_l2,"
              "err_sigma_h1,theta,zeta,effectivity,newton_iters")


@dataclass
class ConvergenceRecord:
    level: int
    ndof: int
    h_max: float
    err_u_L2: float = math.nan
    err_u_H1: float = math.nan
    err_u_H2broken: float = math.nan
    err_sigma_L2: float = math.nan
    err_sigma_H1: float = math.nan
    theta: float = math.nan
    zeta: float = math.nan
    effectivity: float = math.nan
    newton_iters: int = 0


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def records_to_csv(records, comments=()):
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for r in records:
        out.write(",".join(_fmt(v) for v in asdict(r).values()) + "\n")
    for c in comments:
        out.write(f"# {c}\n")
    return out.getvalue()


def records_from_csv(text):
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0].strip() != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    recs = []
    for ln in lines[1:]:
        parts = ln.split(",")
        vals = []
        for f, p in zip(fields(ConvergenceRecord), parts):
            vals.append(int(p) if f.type in (int, "int") else float(p))
        recs.append(ConvergenceRecord(*vals))
    return recs


def observed_orders(values):
    """``log2(e_l / e_{l+1})`` for consecutive levels."""
    v = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return list(np.log2(v[:-1] / v[1:]))


@dataclass
class LevelResult:
    mesh: Mesh
    dofmap: DofMap
    state: State
    report: IndicatorReport
    record: ConvergenceRecord


def solve_and_estimate(problem: Problem, mesh: Mesh, k: int, level=0, newton=None,
                       state0=None, cofactor_source="hessian", quadrature_bump=0):
    dofmap = build_dofmap(mesh, k)
    state, stats = newton_solve(problem, dofmap, newton, state0=state0)
    report = local_indicators(state, dofmap, problem, cofactor_source, quadrature_bump)
    rec = ConvergenceRecord(level, dofmap.num_dofs, shape_metrics(mesh).h,
                            theta=report.theta, zeta=report.zeta,
                            newton_iters=stats.iterations)
    if problem.has_exact:
        err = compute_errors(state, dofmap, problem)
        rec.err_u_L2, rec.err_u_H1 = err.err_u_L2, err.err_u_H1
        rec.err_u_H2broken = err.err_u_H2broken
        rec.err_sigma_L2, rec.err_sigma_H1 = err.err_sigma_L2, err.err_sigma_H1
        try:
            rec.effectivity = effectivity(report, err)
        except UndefinedEffectivityError:
            rec.effectivity = math.nan
    return LevelResult(mesh, dofmap, state, report, rec)


@dataclass
class StudyResult:
    records: list
    orders: dict


def uniform_study(problem: Problem, k=3, n0=4, levels=3, mesh: Mesh = None, newton=None,
                  cofactor_source="hessian", quadrature_bump=0,
                  on_level: Optional[Callable] = None) -> StudyResult:
    """Solve on ``unit_square_mesh(n0 * 2**l)`` (or red refinements of ``mesh``).

    Failures are re-raised with the level number prepended.
    """
    if levels < 1:
        raise ParameterError("levels must be >= 1")
    records = []
    for lev in range(levels):
        if mesh is None:
            m = unit_square_mesh(n0 * 2 ** lev)
        else:
            m = mesh if lev == 0 else refine_uniform(m)
        try:
            res = solve_and_estimate(problem, m, k, lev, newton,
                                     cofactor_source=cofactor_source,
                                     quadrature_bump=quadrature_bump)
        except MAFEMError as exc:
            raise type(exc)(f"level {lev}: {exc}") from exc
        records.append(res.record)
        if on_level:
            on_level(res)
    orders = {name: observed_orders([getattr(r, attr) for r in records])
              for name, attr in (("u_l2", "err_u_L2"), ("u_h1", "err_u_H1"),
                                 ("u_h2b", "err_u_H2broken"), ("sigma_l2", "err_sigma_L2"),
                                 ("sigma_h1", "err_sigma_H1"), ("theta", "theta"))}
    return StudyResult(records, orders)


def transfer(u_old, dofmap_old: DofMap, dofmap_new: DofMap):
    """Nodal interpolation of a V_h field onto a mesh nested in the old one.

    Nodes already present in the old mesh copy their coefficient, so the
    field is reproduced exactly on unrefined cells.

    Requires ``dofmap_new.mesh.parent`` (set by ``bisect``/``refine_uniform``).
    """
    new, old = dofmap_new.mesh, dofmap_old.mesh
    if new is old:
        return np.array(u_old, dtype=float)
    parent = new.parent
    if parent is None:
        raise ValueError("new mesh carries no parent map")
    cd = dofmap_new.cell_dofs
    pc = np.repeat(parent, cd.shape[1])
    pts = dofmap_new.dof_coords[cd.ravel()]
    p = old.vertices[old.cells]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    xi = np.einsum("pij,pj->pi", np.linalg.inv(J)[pc], pts - p[pc, 0])
    phi = dofmap_old.basis.values(xi)
    vals = np.einsum("pb,pb->p", phi, np.asarray(u_old)[dofmap_old.cell_dofs[pc]])
    u_new = np.empty(dofmap_new.num_dofs)
    u_new[cd.ravel()] = vals
    # nodes shared with the old mesh take the old coefficient verbatim
    scale = np.ptp(old.vertices, axis=0).max()
    dist, idx = cKDTree(dofmap_old.dof_coords).query(dofmap_new.dof_coords,
                                                      distance_upper_bound=1e-12 * scale)
    hit = np.isfinite(dist)
    u_new[hit] = np.asarray(u_old)[idx[hit]]
    return u_new


@dataclass
class AdaptResult:
    records: list
    mesh: Mesh
    dofmap: Optional[DofMap] = None
    state: Optional[State] = None
    report: Optional[IndicatorReport] = None
    levels: list = field(default_factory=list)
    error: Optional[Exception] = None


def adaptive_loop(problem: Problem, k=3, theta=0.5, mesh: Mesh = None, max_levels=6,
                  theta_tol=0.0, max_cells=None, newton=None, cofactor_source="hessian",
                  quadrature_bump=0, on_level: Optional[Callable] = None,
                  keep_levels=False) -> AdaptResult:
    """SOLVE, ESTIMATE, MARK (Dorfler), REFINE (bisection) until a stop criterion.

    Stops when ``Theta <= theta_tol``, when ``max_levels`` records exist, or
    when the mesh has at least ``max_cells`` cells. A solver failure ends the
    loop; the records so far are returned with ``error`` set.
    """
    if not 0.0 < theta <= 1.0:
        raise ParameterError(f"theta must lie in (0, 1], got {theta}")
    if max_levels < 1:
        raise ParameterError("max_levels must be >= 1")
    mesh = mesh if mesh is not None else unit_square_mesh(4)
    out = AdaptResult([], mesh)
    prev = None
    for lev in range(max_levels):
        state0 = None
        if prev is not None:
            dm = build_dofmap(mesh, k)
            u0 = transfer(prev.state.u, prev.dofmap, dm)
            state0 = State(reconstruct_sigma(u0, dm), u0, None)
        try:
            res = solve_and_estimate(problem, mesh, k, lev, newton, state0,
                                     cofactor_source, quadrature_bump)
        except MAFEMError as exc:
            log.warning("adaptive loop aborted at level %d: %s", lev, exc)
            out.error = exc
            return out
        out.records.append(res.record)
        out.mesh, out.dofmap, out.state, out.report = mesh, res.dofmap, res.state, res.report
        if keep_levels:
            out.levels.append(res)
        if on_level:
            on_level(res)
        log.info("level %d: cells %d ndof %d theta %.4e", lev, mesh.num_cells,
                 res.record.ndof, res.record.theta)
        if (res.report.theta <= theta_tol or lev + 1 >= max_levels
                or (max_cells is not None and mesh.num_cells >= max_cells)):
            break
        marked = mark_dorfler(res.report, theta)
        mesh = bisect(mesh, marked)
        prev = res
    return out
