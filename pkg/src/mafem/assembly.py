"""Discrete operators of the mixed Monge-Ampere system.

Unknowns are ``s`` (Sigma_h, 4N, component-major) and ``u`` (V_h, N). The
first equation reads ``M s + B u = 0``; the second tests
``det(sigma_h) - f`` against interior basis functions only, since boundary
values of u are imposed strongly.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import MAFEMError
from .lagrange import DofMap, State


def cof(M):
    """Cofactor of 2x2 matrices stacked in the last two axes."""
    M = np.asarray(M)
    out = np.empty_like(M)
    out[..., 0, 0] = M[..., 1, 1]
    out[..., 0, 1] = -M[..., 1, 0]
    out[..., 1, 0] = -M[..., 0, 1]
    out[..., 1, 1] = M[..., 0, 0]
    return out


def det2(M):
    M = np.asarray(M)
    return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]


def _per_cells(fn, nc, threads=1):
    """Evaluate ``fn(slice)`` over contiguous cell chunks, concatenated in order."""
    if threads <= 1 or nc < 2 * threads:
        return fn(slice(0, nc))
    bounds = np.linspace(0, nc, threads + 1).astype(int)
    slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(fn, slices))
    return np.concatenate(parts, axis=0)


def _csr(rows, cols, vals, shape):
    A = sp.coo_matrix((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _pairs(dofs):
    nb = dofs.shape[1]
    rows = np.repeat(dofs[:, :, None], nb, axis=2)
    cols = np.repeat(dofs[:, None, :], nb, axis=1)
    return rows, cols


def assemble_mass_scalar(dofmap: DofMap, threads=1):
    tab = dofmap.cells_tab(2 * dofmap.degree)
    N = dofmap.num_dofs

    def local(sl):
        A = np.einsum("cq,qa,qb->cab", tab.wdet[sl], tab.phi, tab.phi)
        return 0.5 * (A + A.transpose(0, 2, 1))

    loc = _per_cells(local, dofmap.mesh.num_cells, threads)
    rows, cols = _pairs(tab.dofs)
    return _csr(rows, cols, loc, (N, N))


def assemble_mass_sigma(dofmap: DofMap, threads=1):
    """L^2 Gram matrix of Sigma_h: four copies of the scalar mass matrix."""
    M0 = assemble_mass_scalar(dofmap, threads)
    return sp.block_diag([M0] * 4, format="csr")


def assemble_stiffness(dofmap: DofMap, threads=1):
    tab = dofmap.cells_tab(2 * dofmap.degree)
    N = dofmap.num_dofs

    def local(sl):
        A = np.einsum("cq,cqai,cqbi->cab", tab.wdet[sl], tab.dphi[sl], tab.dphi[sl])
        return 0.5 * (A + A.transpose(0, 2, 1))

    loc = _per_cells(local, dofmap.mesh.num_cells, threads)
    rows, cols = _pairs(tab.dofs)
    return _csr(rows, cols, loc, (N, N))


def assemble_load(dofmap: DofMap, fn, degree=None):
    """Vector ``(fn, phi_i)`` over all of V_h."""
    tab = dofmap.cells_tab(degree or 3 * dofmap.degree)
    fx = fn(tab.x[..., 0], tab.x[..., 1])
    loc = np.einsum("cq,cq,qa->ca", tab.wdet, fx, tab.phi)
    return np.bincount(tab.dofs.ravel(), weights=loc.ravel(), minlength=dofmap.num_dofs)


def assemble_hessian_op(dofmap: DofMap, threads=1):
    """Operator B (4N x N) with rows indexed by Sigma_h basis functions.

    For the component-(i, j) basis function ``tau = phi_a e_i e_j^T`` and
    ``u = phi_b``: ``B = (d_j phi_a, d_i phi_b)_Omega
    - <phi_a n_j, d_i phi_b>_dOmega``.
    """
    k = dofmap.degree
    N = dofmap.num_dofs
    tab = dofmap.cells_tab(2 * k)
    btab = dofmap.boundary_tab(2 * k)
    rows_all, cols_all, vals_all = [], [], []
    r0, c0 = _pairs(tab.dofs)
    nbf = btab.dofs.shape[1]
    br = np.repeat(btab.dofs[:, :, None], nbf, axis=2)
    bc = np.repeat(btab.dofs[:, None, :], nbf, axis=1)
    for comp, (i, j) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        def local(sl, i=i, j=j):
            return np.einsum("cq,cqa,cqb->cab", tab.wdet[sl],
                             tab.dphi[sl, :, :, j], tab.dphi[sl, :, :, i])

        vol = _per_cells(local, dofmap.mesh.num_cells, threads)
        bnd = -np.einsum("fq,f,fqa,fqb->fab", btab.wds, btab.normal[:, j],
                         btab.phi, btab.dphi[..., i])
        rows_all += [comp * N + r0, comp * N + br]
        cols_all += [c0, bc]
        vals_all += [vol, bnd]
    return _csr(np.concatenate([r.ravel() for r in rows_all]),
                np.concatenate([c.ravel() for c in cols_all]),
                np.concatenate([v.ravel() for v in vals_all]), (4 * N, N))


def sigma_at_quadrature(sigma, dofmap: DofMap, tab):
    """Sigma_h at quadrature points as ``(nc, nq, 2, 2)``."""
    comps = dofmap.sigma_components(sigma)
    S = np.stack([tab.values(comps[c]) for c in range(4)], axis=-1)
    return S.reshape(S.shape[:-1] + (2, 2))


def det_residual_full(sigma, dofmap: DofMap, f, threads=1):
    """``(det sigma_h - f, phi_i)`` for every V_h basis function."""
    tab = dofmap.cells_tab(3 * dofmap.degree)
    S = sigma_at_quadrature(sigma, dofmap, tab)
    fx = f(tab.x[..., 0], tab.x[..., 1])

    def local(sl):
        return np.einsum("cq,cq,qa->ca", tab.wdet[sl], det2(S[sl]) - fx[sl], tab.phi)

    loc = _per_cells(local, dofmap.mesh.num_cells, threads)
    return np.bincount(tab.dofs.ravel(), weights=loc.ravel(), minlength=dofmap.num_dofs)


def det_residual(state: State, dofmap: DofMap, f, threads=1):
    """``(det sigma_h - f, phi_i)`` for interior V_h DOFs ``i``."""
    return det_residual_full(state.sigma, dofmap, f, threads)[dofmap.interior_dofs]


def cof_jacobian_block(state: State, dofmap: DofMap, threads=1):
    """Derivative of :func:`det_residual` with respect to the Sigma_h coefficients.

    Entries ``(cof(sigma_h) : tau_j, phi_i)`` with rows over interior V_h DOFs
    and columns over Sigma_h DOFs.
    """
    k, N = dofmap.degree, dofmap.num_dofs
    tab = dofmap.cells_tab(3 * k)
    C = cof(sigma_at_quadrature(state.sigma, dofmap, tab)).reshape(tab.wdet.shape + (4,))

    def local(sl):
        return np.einsum("cq,cqm,qa,qb->cmab", tab.wdet[sl], C[sl], tab.phi, tab.phi)

    loc = _per_cells(local, dofmap.mesh.num_cells, threads)  # (nc, 4, nb, nb)
    rowmap = -np.ones(N, dtype=np.int64)
    rowmap[dofmap.interior_dofs] = np.arange(len(dofmap.interior_dofs))
    nb = tab.dofs.shape[1]
    rows = np.broadcast_to(rowmap[tab.dofs][:, None, :, None], loc.shape)
    cols = (np.arange(4)[None, :, None, None] * N
            + tab.dofs[:, None, None, :]) + np.zeros((1, 1, nb, 1), dtype=np.int64)
    keep = rows >= 0
    return _csr(rows[keep], cols[keep], loc[keep], (len(dofmap.interior_dofs), 4 * N))


@dataclass(frozen=True, eq=False)
class SystemBlocks:
    """State-independent blocks plus Dirichlet bookkeeping."""

    M: sp.csr_matrix
    B: sp.csr_matrix
    fixed: np.ndarray
    free: np.ndarray
    g_values: np.ndarray
    B_free: sp.csr_matrix
    lift: np.ndarray


def apply_dirichlet(M, B, dofmap: DofMap, g_h):
    """Eliminate boundary u-DOFs, fixing them to ``g_h`` (indexed like L_h).

    ``lift`` is ``B[:, fixed] @ g_h``; the constrained first equation is
    ``M s + B_free u_free + lift = 0``.
    """
    g_h = np.asarray(g_h, dtype=float)
    fixed, free = dofmap.boundary_dofs, dofmap.interior_dofs
    if g_h.shape != (len(fixed),) or len(fixed) + len(free) != dofmap.num_dofs:
        raise MAFEMError("L_h DOFs do not match the boundary DOFs of V_h")
    Bc = B.tocsc()
    lift = Bc[:, fixed] @ g_h
    return SystemBlocks(M, B, fixed, free, g_h, Bc[:, free].tocsr(), lift)


def assemble_blocks(dofmap: DofMap, g_h, threads=1):
    M = assemble_mass_sigma(dofmap, threads)
    B = assemble_hessian_op(dofmap, threads)
    return apply_dirichlet(M, B, dofmap, g_h)


def reconstruct_sigma(u, dofmap: DofMap, M=None, B=None):
    """Solve the first equation for sigma_h given u_h: ``s = -M^{-1} B u``."""
    from scipy.sparse.linalg import splu

    if M is None:
        M = assemble_mass_sigma(dofmap)
    if B is None:
        B = assemble_hessian_op(dofmap)
    # the four diagonal blocks of M are identical: factor one
    N = dofmap.num_dofs
    lu = splu(M[:N, :N].tocsc())
    rhs = -(B @ u).reshape(4, N)
    return np.concatenate([lu.solve(r) for r in rhs])
