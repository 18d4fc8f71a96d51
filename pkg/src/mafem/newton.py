"""Damped Newton iteration for the coupled (sigma_h, u_h) system."""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import (
    assemble_blocks,
    assemble_load,
    assemble_stiffness,
    cof_jacobian_block,
    det_residual,
    reconstruct_sigma,
    SystemBlocks,
)
from .errors import (
    DivergedError,
    NotConvergedError,
    ParameterError,
    ProblemDataError,
    SingularMatrixError,
)
from .lagrange import DofMap, State, interpolate

log = logging.getLogger(__name__)


@dataclass
class NewtonOptions:
    tol_residual: float = 1e-10
    max_iters: int = 30
    damping: str = "backtracking"
    max_halvings: int = 30
    linear_rtol: float = 1e-10
    threads: int = 1

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ParameterError("tol_residual must be positive")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be >= 1")
        if self.damping not in ("none", "backtracking"):
            raise ParameterError(f"unknown damping {self.damping!r}")


@dataclass
class SolveStats:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    converged: bool = False


def solve_linear(A, b, rtol=1e-10, atol=0.0, refine=3):
    """Sparse direct solve with a residual check and iterative refinement."""
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise SingularMatrixError("matrix is not square")
    try:
        lu = splu(A)
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from None
    x = lu.solve(b)
    bound = max(atol, rtol * np.linalg.norm(b))
    for _ in range(refine):
        if not np.all(np.isfinite(x)):
            break
        r = b - A @ x
        if np.linalg.norm(r) <= bound:
            return x
        x = x + lu.solve(r)
    if not np.all(np.isfinite(x)) or np.linalg.norm(b - A @ x) > bound:
        raise SingularMatrixError("linear solve did not reach the residual bound")
    return x


def _check_positive_f(problem, dofmap):
    tab = dofmap.cells_tab(3 * dofmap.degree)
    fx = problem.f(tab.x[..., 0], tab.x[..., 1])
    if not np.all(fx > 0):
        c, q = np.unravel_index(np.argmin(fx), fx.shape)
        raise ProblemDataError(f"f must be positive; f = {fx[c, q]:.3g} at {tab.x[c, q]}")
    return fx


def initial_guess(problem, dofmap: DofMap, blocks: SystemBlocks = None) -> State:
    """Poisson start: ``Laplace(u0) = 2 sqrt(f)``, ``u0 = g_h`` on the boundary."""
    _check_positive_f(problem, dofmap)
    g_h = interpolate(problem.g, dofmap, "L")
    if blocks is None:
        blocks = assemble_blocks(dofmap, g_h)
    K = assemble_stiffness(dofmap).tocsr()
    load = -assemble_load(dofmap, lambda x, y: 2.0 * np.sqrt(problem.f(x, y)))
    fr, fx = dofmap.interior_dofs, dofmap.boundary_dofs
    u = np.zeros(dofmap.num_dofs)
    u[fx] = g_h
    if len(fr):
        rhs = load[fr] - K[fr][:, fx] @ g_h
        u[fr] = solve_linear(K[fr][:, fr], rhs)
    sigma = reconstruct_sigma(u, dofmap, blocks.M, blocks.B)
    return State(sigma, u, g_h.copy())


def _residual(blocks, dofmap, problem, s, u, threads):
    u_free = u[blocks.free]
    r1 = blocks.M @ s + blocks.B_free @ u_free + blocks.lift
    r2 = det_residual(State(s, u, None), dofmap, problem.f, threads)
    return np.concatenate([r1, r2])


def newton_solve(problem, dofmap: DofMap, opts: NewtonOptions = None, state0: State = None,
                 blocks: SystemBlocks = None):
    """Solve the discrete system; returns ``(State, SolveStats)``.

    ``state0`` overrides the Poisson initial guess (warm start). Its boundary
    u-values are replaced by ``g_h``.
    """
    opts = opts or NewtonOptions()
    g_h = interpolate(problem.g, dofmap, "L")
    if blocks is None:
        blocks = assemble_blocks(dofmap, g_h, opts.threads)
    if state0 is None:
        state = initial_guess(problem, dofmap, blocks)
    else:
        _check_positive_f(problem, dofmap)
        u = np.array(state0.u, dtype=float)
        u[blocks.fixed] = g_h
        state = State(np.array(state0.sigma, dtype=float), u, g_h.copy())

    s, u = state.sigma.copy(), state.u.copy()
    free = blocks.free
    n_s = len(s)
    stats = SolveStats()
    r = _residual(blocks, dofmap, problem, s, u, opts.threads)
    rn = float(np.linalg.norm(r))
    stats.residuals.append(rn)
    if not np.isfinite(rn):
        raise DivergedError("non-finite initial residual", 0, stats.residuals)

    while rn > opts.tol_residual:
        if stats.iterations >= opts.max_iters:
            raise NotConvergedError(
                f"no convergence in {opts.max_iters} iterations (residual {rn:.3e})",
                stats.residuals)
        it = stats.iterations + 1
        C = cof_jacobian_block(State(s, u, None), dofmap, opts.threads)
        J = sp.bmat([[blocks.M, blocks.B_free], [C, None]], format="csc")
        try:
            delta = solve_linear(J, -r, rtol=opts.linear_rtol)
        except SingularMatrixError as exc:
            raise DivergedError(f"iteration {it}: {exc}", it, stats.residuals) from None
        ds, du = delta[:n_s], delta[n_s:]

        step = 1.0
        halvings = 0 if opts.damping == "none" else opts.max_halvings
        for _ in range(halvings + 1):
            s_try = s + step * ds
            u_try = u.copy()
            u_try[free] += step * du
            r_try = _residual(blocks, dofmap, problem, s_try, u_try, opts.threads)
            rn_try = float(np.linalg.norm(r_try))
            if opts.damping == "none" or (np.isfinite(rn_try) and rn_try < rn):
                break
            step *= 0.5
        else:
            raise DivergedError(f"iteration {it}: line search found no descent "
                                f"(residual {rn:.3e})", it, stats.residuals)
        if not np.isfinite(rn_try):
            raise DivergedError(f"iteration {it}: non-finite residual", it, stats.residuals)
        s, u, r, rn = s_try, u_try, r_try, rn_try
        stats.iterations = it
        stats.residuals.append(rn)
        stats.steps.append(step)
        log.debug("newton %d: residual %.3e step %.3g", it, rn, step)

    stats.converged = True
    return State(s, u, g_h.copy()), stats
