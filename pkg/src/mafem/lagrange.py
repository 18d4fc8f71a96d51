"""Lagrange elements of degree k >= 3 on triangles.

Reference triangle: vertices (0, 0), (1, 0), (0, 1). Nodes are the principal
lattice points, ordered vertices first, then the k - 1 points of each local
edge (edge e runs from vertex (e+1)%3 to (e+2)%3), then interior points.

Global DOF numbering: one per mesh vertex, then k - 1 per edge (counted from
the edge's lower-numbered vertex), then (k-1)(k-2)/2 per cell.
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DataError, UnsupportedDegreeError
from .mesh import Mesh
from .quadrature import QuadRule

MIN_DEGREE, MAX_DEGREE = 3, 6

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

# sigma component order: s11, s12, s21, s22 -> (row, col)
COMPONENTS = ((0, 0), (0, 1), (1, 0), (1, 1))


def lattice_nodes(k):
    """Barycentric integer triples of the degree-k lattice in local order."""
    nodes = [(k, 0, 0), (0, k, 0), (0, 0, k)]
    for e in range(3):
        p, q = (e + 1) % 3, (e + 2) % 3
        for t in range(1, k):
            b = [0, 0, 0]
            b[p], b[q] = k - t, t
            nodes.append(tuple(b))
    for j in range(1, k):
        for i in range(1, k - j):
            nodes.append((k - i - j, i, j))
    return nodes


# gradients of the barycentric coordinates on the reference triangle
_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


class ReferenceBasis:
    """Nodal basis of P_k on the reference triangle.

    Each function is the lattice product
    ``prod_i prod_{j < a_i} (k lambda_i - j) / (j + 1)``; derivatives are
    accumulated factor by factor with the product rule.
    """

    def __init__(self, k):
        self.degree = k
        self.lattice = lattice_nodes(k)
        self.nodes = np.array([[b[1] / k, b[2] / k] for b in self.lattice])
        # (basis, vertex, shift j, scale 1/(j+1)) for every linear factor
        self._factors = [[(i, j, 1.0 / (j + 1)) for i in range(3) for j in range(a[i])]
                         for a in self.lattice]

    def __len__(self):
        return len(self.nodes)

    def _eval(self, pts, order):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        lam = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
        n, nb, k = len(pts), len(self.lattice), self.degree
        v = np.ones((n, nb))
        g = np.zeros((n, nb, 2)) if order >= 1 else None
        h = np.zeros((n, nb, 2, 2)) if order >= 2 else None
        for b, facs in enumerate(self._factors):
            for i, j, c in facs:
                a = c * (k * lam[:, i] - j)
                da = c * k * _DLAMBDA[i]
                if h is not None:
                    gd = g[:, b, :, None] * da[None, None, :]
                    h[:, b] = h[:, b] * a[:, None, None] + gd + gd.transpose(0, 2, 1)
                if g is not None:
                    g[:, b] = g[:, b] * a[:, None] + v[:, b, None] * da
                v[:, b] *= a
        return v, g, h

    def values(self, pts):
        """Basis values, shape ``(npts, nb)``."""
        return self._eval(pts, 0)[0]

    def gradients(self, pts):
        """Reference gradients, shape ``(npts, nb, 2)``."""
        return self._eval(pts, 1)[1]

    def hessians(self, pts):
        """Reference Hessians, shape ``(npts, nb, 2, 2)``."""
        return self._eval(pts, 2)[2]


@lru_cache(maxsize=None)
def reference_basis(k: int) -> ReferenceBasis:
    if not isinstance(k, (int, np.integer)) or not MIN_DEGREE <= k <= MAX_DEGREE:
        raise UnsupportedDegreeError(f"degree k must be in {MIN_DEGREE}..{MAX_DEGREE}, got {k}")
    return ReferenceBasis(int(k))


@dataclass(frozen=True, eq=False)
class DofMap:
    """Global numbering of V_h; Sigma_h and L_h are derived layouts.

    ``sigma`` vectors are component-major: ``[s11, s12, s21, s22]`` each of
    length ``num_dofs``. ``lambda`` vectors are indexed like
    ``boundary_dofs``.
    """

    mesh: Mesh
    degree: int
    cell_dofs: np.ndarray
    num_dofs: int
    dof_coords: np.ndarray
    boundary_dofs: np.ndarray
    interior_dofs: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def basis(self):
        return reference_basis(self.degree)

    @property
    def dim_sigma(self):
        return 4 * self.num_dofs

    @property
    def dim_lambda(self):
        return len(self.boundary_dofs)

    def sigma_components(self, sigma):
        return np.asarray(sigma).reshape(4, self.num_dofs)

    def cells_tab(self, degree, order=1):
        """Cached :class:`CellTabulation` for a triangle rule of ``degree``."""
        from .quadrature import triangle_rule

        key = ("cells", int(degree), order)
        if key not in self._cache:
            self._cache[key] = CellTabulation(self, triangle_rule(degree), order)
        return self._cache[key]

    def boundary_tab(self, degree):
        from .quadrature import edge_rule

        key = ("boundary", int(degree))
        if key not in self._cache:
            self._cache[key] = BoundaryTabulation(self, edge_rule(degree))
        return self._cache[key]


def build_dofmap(mesh: Mesh, k: int) -> DofMap:
    basis = reference_basis(k)
    nv, ne, nc = mesh.num_vertices, mesh.num_edges, mesh.num_cells
    ni = (k - 1) * (k - 2) // 2
    N = nv + (k - 1) * ne + ni * nc
    nb = len(basis)
    cells = mesh.cells
    dofs = np.empty((nc, nb), dtype=np.int64)
    dofs[:, :3] = cells
    col = 3
    for e in range(3):
        p, q = cells[:, (e + 1) % 3], cells[:, (e + 2) % 3]
        base = nv + (k - 1) * mesh.cell_edges[:, e]
        forward = p < q
        for t in range(1, k):
            pos = np.where(forward, t, k - t)
            dofs[:, col] = base + pos - 1
            col += 1
    start = nv + (k - 1) * ne
    dofs[:, col:] = start + ni * np.arange(nc)[:, None] + np.arange(ni)[None, :]

    coords = np.empty((N, 2))
    phys = _affine(mesh)
    x = phys.map(basis.nodes)  # (nc, nb, 2)
    coords[dofs.ravel()] = x.reshape(-1, 2)

    bmask = np.zeros(N, dtype=bool)
    bmask[mesh.boundary_edges.ravel()] = True
    edge_id = {tuple(e): i for i, e in enumerate(mesh.edges.tolist())}
    for a, b in mesh.boundary_edges.tolist():
        eid = edge_id[(a, b) if a < b else (b, a)]
        bmask[nv + (k - 1) * eid: nv + (k - 1) * (eid + 1)] = True
    bdofs = np.flatnonzero(bmask)
    idofs = np.flatnonzero(~bmask)
    for a in (dofs, coords, bdofs, idofs):
        a.setflags(write=False)
    return DofMap(mesh, k, dofs, N, coords, bdofs, idofs)


@dataclass(frozen=True)
class _affine:
    """Affine cell maps x = v0 + J xi."""

    mesh: Mesh

    @property
    def J(self):
        p = self.mesh.vertices[self.mesh.cells]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)

    def map(self, ref_pts):
        p0 = self.mesh.vertices[self.mesh.cells[:, 0]]
        return p0[:, None, :] + np.einsum("cij,qj->cqi", self.J, ref_pts)


class CellTabulation:
    """Basis data at quadrature points of every cell.

    Attributes: ``phi (nq, nb)``, ``dphi (nc, nq, nb, 2)``, optionally
    ``d2phi (nc, nq, nb, 2, 2)``, ``x (nc, nq, 2)``, ``wdet (nc, nq)``.
    """

    def __init__(self, dofmap: DofMap, rule: QuadRule, order=1):
        mesh, basis = dofmap.mesh, dofmap.basis
        aff = _affine(mesh)
        J = aff.J
        invJ = np.linalg.inv(J)
        detJ = np.abs(np.linalg.det(J))
        self.rule = rule
        self.dofs = dofmap.cell_dofs
        self.phi = basis.values(rule.points)
        self.x = aff.map(rule.points)
        self.wdet = detJ[:, None] * rule.weights[None, :]
        g = basis.gradients(rule.points)
        self.dphi = np.einsum("cji,qbj->cqbi", invJ, g)
        self.d2phi = None
        if order >= 2:
            H = basis.hessians(rule.points)
            self.d2phi = np.einsum("cji,qbjm,cml->cqbil", invJ, H, invJ)

    def values(self, coeffs):
        """Field values ``(nc, nq)`` of a V_h coefficient vector."""
        return np.einsum("qb,cb->cq", self.phi, np.asarray(coeffs)[self.dofs])

    def grads(self, coeffs):
        return np.einsum("cqbi,cb->cqi", self.dphi, np.asarray(coeffs)[self.dofs])

    def hessians(self, coeffs):
        return np.einsum("cqbil,cb->cqil", self.d2phi, np.asarray(coeffs)[self.dofs])


class BoundaryTabulation:
    """Basis data at edge quadrature points of every boundary facet."""

    def __init__(self, dofmap: DofMap, rule: QuadRule):
        mesh, basis = dofmap.mesh, dofmap.basis
        facets = mesh.boundary_facets
        cell, loc = facets[:, 0], facets[:, 1]
        t = rule.points
        ref = np.empty((len(facets), len(t), 2))
        for e in range(3):
            a, b = REF_VERTICES[(e + 1) % 3], REF_VERTICES[(e + 2) % 3]
            ref[loc == e] = a + t[:, None] * (b - a)
        J = _affine(mesh).J[cell]
        invJ = np.linalg.inv(J)
        p0 = mesh.vertices[mesh.cells[cell, 0]]
        self.cell = cell
        self.dofs = dofmap.cell_dofs[cell]
        self.x = p0[:, None, :] + np.einsum("fij,fqj->fqi", J, ref)
        self.phi = np.stack([basis.values(r) for r in ref])  # (nf, nq, nb)
        g = np.stack([basis.gradients(r) for r in ref])
        self.dphi = np.einsum("fji,fqbj->fqbi", invJ, g)
        c = mesh.cells[cell]
        pa = mesh.vertices[c[np.arange(len(c)), (loc + 1) % 3]]
        pb = mesh.vertices[c[np.arange(len(c)), (loc + 2) % 3]]
        d = pb - pa
        length = np.linalg.norm(d, axis=1)
        self.normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
        self.wds = length[:, None] * rule.weights[None, :]

    def values(self, coeffs):
        return np.einsum("fqb,fb->fq", self.phi, np.asarray(coeffs)[self.dofs])


@dataclass
class State:
    """Coefficient vectors of a discrete solution (sigma_h, u_h, lambda_h)."""

    sigma: np.ndarray
    u: np.ndarray
    lam: np.ndarray

    def check(self, dofmap: DofMap):
        assert self.sigma.shape == (dofmap.dim_sigma,)
        assert self.u.shape == (dofmap.num_dofs,)
        assert self.lam.shape == (dofmap.dim_lambda,)
        return bool(np.all(np.isfinite(self.sigma)) and np.all(np.isfinite(self.u))
                    and np.all(np.isfinite(self.lam)))


def _call_field(fn, pts):
    vals = np.asarray(fn(pts[:, 0], pts[:, 1]), dtype=float)
    return np.broadcast_to(vals, (len(pts),)).copy()


def interpolate(fn, dofmap: DofMap, target="V"):
    """Nodal interpolant of ``fn(x, y)`` into V_h (``target="V"``) or L_h.

    ``fn`` must accept coordinate arrays. For L_h the result is indexed like
    ``dofmap.boundary_dofs``.
    """
    if target == "V":
        pts = dofmap.dof_coords
    elif target == "L":
        pts = dofmap.dof_coords[dofmap.boundary_dofs]
    else:
        raise ValueError(f"unknown target space {target!r}")
    vals = _call_field(fn, pts)
    bad = ~np.isfinite(vals)
    if bad.any():
        x, y = pts[np.argmax(bad)]
        raise DataError(f"non-finite value at node ({x:.17g}, {y:.17g})")
    return vals


def evaluate_field(coeffs, dofmap: DofMap, cell: int, ref_point, order=0):
    """Value, gradient or Hessian of a V_h field at a reference point of a cell."""
    basis = dofmap.basis
    p = np.asarray(ref_point, dtype=float).reshape(1, 2)
    c = np.asarray(coeffs)[dofmap.cell_dofs[cell]]
    if order == 0:
        return float(basis.values(p)[0] @ c)
    J = _affine(dofmap.mesh).J[cell]
    invJ = np.linalg.inv(J)
    if order == 1:
        return invJ.T @ (basis.gradients(p)[0].T @ c)
    if order == 2:
        H = np.einsum("bij,b->ij", basis.hessians(p)[0], c)
        return invJ.T @ H @ invJ
    raise ValueError("derivative order must be 0, 1 or 2")


def locate_points(mesh: Mesh, pts, candidates=None, tol=1e-12):
    """Cell index and reference coordinates of each point.

    ``candidates`` optionally restricts the search per point to one cell
    (used for nested meshes where the parent cell is known).
    """
    aff = _affine(mesh)
    J = aff.J
    invJ = np.linalg.inv(J)
    p0 = mesh.vertices[mesh.cells[:, 0]]
    pts = np.asarray(pts, dtype=float)
    if candidates is not None:
        xi = np.einsum("pij,pj->pi", invJ[candidates], pts - p0[candidates])
        return np.asarray(candidates), xi
    cells = np.empty(len(pts), dtype=np.int64)
    xis = np.empty((len(pts), 2))
    for i, p in enumerate(pts):
        xi = np.einsum("cij,cj->ci", invJ, p - p0)
        inside = np.min(np.column_stack([xi, 1.0 - xi.sum(1)]), axis=1)
        c = int(np.argmax(inside))
        if inside[c] < -tol:
            raise ValueError(f"point {p} outside mesh")
        cells[i], xis[i] = c, xi[c]
    return cells, xis
