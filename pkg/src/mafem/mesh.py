"""Conforming triangulations: construction, topology, refinement and I/O.

A :class:`Mesh` is immutable. ``refine_uniform`` and ``bisect`` return new
meshes. Local edge ``e`` of a cell is the edge opposite local vertex ``e``,
running from vertex ``(e + 1) % 3`` to vertex ``(e + 2) % 3``.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidMeshError, MeshParseError, RefinementError

# boundary markers of the generated unit square: bottom, right, top, left
MARK_BOTTOM, MARK_RIGHT, MARK_TOP, MARK_LEFT = 1, 2, 3, 4


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation with boundary topology and bisection metadata.

    Parameters
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) int array, counterclockwise
    boundary_edges : (nb, 2) int array of vertex pairs
    boundary_markers : (nb,) int array
    refinement_edge : (nc,) int array, local index of the edge opposite the
        newest vertex of each cell
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_edges: np.ndarray
    boundary_markers: np.ndarray
    refinement_edge: np.ndarray
    parent: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float).reshape(-1, 2))
        object.__setattr__(self, "cells", _frozen(self.cells, np.int64).reshape(-1, 3))
        object.__setattr__(
            self, "boundary_edges", _frozen(self.boundary_edges, np.int64).reshape(-1, 2)
        )
        object.__setattr__(self, "boundary_markers", _frozen(self.boundary_markers, np.int64))
        object.__setattr__(self, "refinement_edge", _frozen(self.refinement_edge, np.int64))
        if self.parent is not None:
            object.__setattr__(self, "parent", _frozen(self.parent, np.int64))
        self._validate()

    def _validate(self):
        nv, nc = len(self.vertices), len(self.cells)
        if nc == 0:
            raise InvalidMeshError("mesh has no cells")
        if self.cells.min() < 0 or self.cells.max() >= nv:
            raise InvalidMeshError("cell vertex index out of range")
        if len(self.boundary_markers) != len(self.boundary_edges):
            raise InvalidMeshError("one marker per boundary edge required")
        if len(self.refinement_edge) != nc:
            raise InvalidMeshError("one refinement edge per cell required")
        if np.any(self.cell_areas <= 0.0):
            bad = int(np.argmin(self.cell_areas))
            raise InvalidMeshError(f"cell {bad} has non-positive signed area")
        topo = self.edges[self.edge_cells[:, 1] < 0]
        given = np.sort(self.boundary_edges, axis=1)
        if len(topo) != len(given) or not np.array_equal(
            topo[np.lexsort(topo.T[::-1])], given[np.lexsort(given.T[::-1])]
        ):
            raise InvalidMeshError("boundary edges do not match the mesh boundary")

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def num_edges(self):
        return len(self.edges)

    @cached_property
    def _edge_topology(self):
        c = self.cells
        local = np.stack([c[:, [1, 2]], c[:, [2, 0]], c[:, [0, 1]]], axis=1)  # (nc, 3, 2)
        keys = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        cell_edges = inverse.reshape(-1, 3)
        ne = len(edges)
        counts = np.bincount(inverse, minlength=ne)
        if counts.max() > 2:
            raise InvalidMeshError("edge shared by more than two cells")
        edge_cells = -np.ones((ne, 2), dtype=np.int64)
        edge_local = -np.ones((ne, 2), dtype=np.int64)
        owner = np.repeat(np.arange(len(c)), 3)
        loc = np.tile(np.arange(3), len(c))
        order = np.argsort(inverse, kind="stable")
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order][1:] != inverse[order][:-1]
        slot = np.where(first, 0, 1)
        edge_cells[inverse[order], slot] = owner[order]
        edge_local[inverse[order], slot] = loc[order]
        for a in (edges, cell_edges, edge_cells, edge_local):
            a.setflags(write=False)
        return edges, cell_edges, edge_cells, edge_local

    @property
    def edges(self):
        """Sorted vertex pairs of all edges."""
        return self._edge_topology[0]

    @property
    def cell_edges(self):
        """Edge index of each local edge, shape ``(nc, 3)``."""
        return self._edge_topology[1]

    @property
    def edge_cells(self):
        """Incident cells of each edge; ``-1`` in column 1 on the boundary."""
        return self._edge_topology[2]

    @property
    def edge_local(self):
        return self._edge_topology[3]

    @cached_property
    def boundary_facets(self):
        """``(cell, local_edge, marker)`` for every boundary edge, in file order."""
        key = {tuple(e): i for i, e in enumerate(self.edges.tolist())}
        eids = np.array([key[tuple(sorted(e))] for e in self.boundary_edges.tolist()],
                        dtype=np.int64).reshape(-1)
        out = np.column_stack([self.edge_cells[eids, 0], self.edge_local[eids, 0],
                               self.boundary_markers]).astype(np.int64).reshape(-1, 3)
        out.setflags(write=False)
        return out

    @cached_property
    def cell_areas(self):
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def area(self):
        return float(np.sum(self.cell_areas))

    @cached_property
    def centroids(self):
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def edge_lengths(self):
        """Length of each local edge, shape ``(nc, 3)``."""
        p = self.vertices[self.cells]
        return np.stack([np.linalg.norm(p[:, (e + 2) % 3] - p[:, (e + 1) % 3], axis=1)
                         for e in range(3)], axis=1)

    def is_conforming(self):
        """True when every edge off the marked boundary has two cells."""
        nb = int(np.count_nonzero(self.edge_cells[:, 1] < 0))
        return nb == len(self.boundary_edges) and bool(np.all(self.edge_cells[:, 0] >= 0))

    def same_as(self, other):
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.cells, other.cells)
                and np.array_equal(self.boundary_edges, other.boundary_edges)
                and np.array_equal(self.boundary_markers, other.boundary_markers)
                and np.array_equal(self.refinement_edge, other.refinement_edge))


def _longest_edge(vertices, cells):
    p = vertices[cells]
    lens = np.stack([np.linalg.norm(p[:, (e + 2) % 3] - p[:, (e + 1) % 3], axis=1)
                     for e in range(3)], axis=1)
    return np.argmax(lens, axis=1)


def unit_square_mesh(n: int) -> Mesh:
    """Structured mesh of ``[0, 1]^2`` with ``2 n^2`` right triangles."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)  # idx[j, i] -> (x_i, y_j)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    ref = np.tile([1, 2], n * n)  # hypotenuse v00-v11
    r = np.arange(n)
    bottom = np.column_stack([idx[0, r], idx[0, r + 1]])
    right = np.column_stack([idx[r, n], idx[r + 1, n]])
    top = np.column_stack([idx[n, r + 1], idx[n, r]])[::-1]
    left = np.column_stack([idx[r + 1, 0], idx[r, 0]])[::-1]
    bedges = np.vstack([bottom, right, top, left])
    markers = np.repeat([MARK_BOTTOM, MARK_RIGHT, MARK_TOP, MARK_LEFT], n)
    return Mesh(vertices, cells, bedges, markers, ref)


@dataclass(frozen=True, eq=False)
class ShapeReport:
    h_K: np.ndarray
    rho_K: np.ndarray
    ratio: np.ndarray
    h: float
    quasi_uniformity: float

    @property
    def max_ratio(self):
        return float(self.ratio.max())


def shape_metrics(mesh: Mesh) -> ShapeReport:
    """Diameters, inradii and shape ratios of every cell."""
    lens = mesh.edge_lengths
    area = mesh.cell_areas
    if np.any(area <= 0.0):
        raise InvalidMeshError("degenerate cell in shape_metrics")
    h_K = lens.max(axis=1)
    rho_K = 2.0 * area / lens.sum(axis=1)
    h = float(h_K.max())
    return ShapeReport(h_K, rho_K, h_K / rho_K, h, h / float(h_K.min()))


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: every cell split into four similar children."""
    nv = mesh.num_vertices
    E = mesh.edges
    mids = 0.5 * (mesh.vertices[E[:, 0]] + mesh.vertices[E[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    c = mesh.cells
    m = nv + mesh.cell_edges  # m[:, e] is the midpoint opposite local vertex e
    a, b, cc = c[:, 0], c[:, 1], c[:, 2]
    ma, mb, mc = m[:, 0], m[:, 1], m[:, 2]
    children = np.stack([
        np.column_stack([a, mc, mb]),
        np.column_stack([mc, b, ma]),
        np.column_stack([mb, ma, cc]),
        np.column_stack([ma, mb, mc]),
    ], axis=1).reshape(-1, 3)
    ref = np.repeat(mesh.refinement_edge, 4)
    parent = np.repeat(np.arange(mesh.num_cells), 4)

    key = {tuple(e): i for i, e in enumerate(E.tolist())}
    bmid = np.array([nv + key[tuple(sorted(e))] for e in mesh.boundary_edges.tolist()],
                    dtype=np.int64)
    be = mesh.boundary_edges
    bedges = np.stack([np.column_stack([be[:, 0], bmid]),
                       np.column_stack([bmid, be[:, 1]])], axis=1).reshape(-1, 2)
    markers = np.repeat(mesh.boundary_markers, 2)
    return Mesh(vertices, children, bedges, markers, ref, parent=parent)


def bisect(mesh: Mesh, marked) -> Mesh:
    """Newest-vertex bisection of ``marked`` cells with conforming closure.

    The returned mesh carries ``parent``, the index of the coarse cell each
    new cell lies in.
    """
    marked = np.asarray(sorted(set(int(i) for i in marked)), dtype=np.int64)
    nc = mesh.num_cells
    if len(marked) == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= nc:
        raise IndexError("marked cell index out of range")

    ce = mesh.cell_edges
    ref_e = ce[np.arange(nc), mesh.refinement_edge]
    edge_marked = np.zeros(mesh.num_edges, dtype=bool)
    edge_marked[ref_e[marked]] = True
    for _ in range(4 * nc + 1):
        touched = edge_marked[ce].any(axis=1)
        need = touched & ~edge_marked[ref_e]
        if not need.any():
            break
        edge_marked[ref_e[need]] = True
    else:
        raise RefinementError("bisection closure did not terminate")

    nv = mesh.num_vertices
    medges = np.flatnonzero(edge_marked)
    mid_index = -np.ones(mesh.num_edges, dtype=np.int64)
    mid_index[medges] = nv + np.arange(len(medges))
    E = mesh.edges
    vertices = np.vstack([mesh.vertices,
                          0.5 * (mesh.vertices[E[medges, 0]] + mesh.vertices[E[medges, 1]])])
    key = {tuple(e): i for i, e in enumerate(E.tolist())}

    def edge_mid(p, q):
        i = key.get((p, q) if p < q else (q, p))
        return -1 if i is None else mid_index[i]

    cells, refs, parents = [], [], []
    for ic in range(nc):
        tri = mesh.cells[ic].tolist()
        r = int(mesh.refinement_edge[ic])
        if not edge_marked[ref_e[ic]]:
            cells.append(tri)
            refs.append(r)
            parents.append(ic)
            continue
        stack = [(tri, r, 0)]
        out = []
        while stack:
            t, r, depth = stack.pop()
            # rotate so the refinement edge is (a, b) and c is the newest vertex
            a, b, c = t[(r + 1) % 3], t[(r + 2) % 3], t[r]
            m = edge_mid(a, b) if depth < 3 else -1
            if m < 0:
                out.append((t, r))
                continue
            # children pushed in reverse so output order is (a, m, c), (m, b, c)
            stack.append(([m, b, c], 0, depth + 1))
            stack.append(([a, m, c], 1, depth + 1))
        for t, r in out:
            cells.append(t)
            refs.append(r)
            parents.append(ic)

    bedges, markers = [], []
    for (p, q), mk in zip(mesh.boundary_edges.tolist(), mesh.boundary_markers.tolist()):
        m = edge_mid(p, q)
        if m < 0:
            bedges.append((p, q))
            markers.append(mk)
        else:
            bedges.extend([(p, m), (m, q)])
            markers.extend([mk, mk])
    return Mesh(vertices, cells, bedges, markers, refs, parent=parents)


def write_mesh(mesh: Mesh) -> str:
    lines = [f"{mesh.num_vertices} {mesh.num_cells} {len(mesh.boundary_edges)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += ["%d %d %d" % tuple(c) for c in mesh.cells.tolist()]
    lines += ["%d %d %d" % (e[0], e[1], mk)
              for e, mk in zip(mesh.boundary_edges.tolist(), mesh.boundary_markers.tolist())]
    return "\n".join(lines) + "\n"


def read_mesh(text: str) -> Mesh:
    """Parse the plain-text mesh format.

    Clockwise cells are reoriented. Refinement edges are set to the longest
    edge of each cell.
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s and not s.startswith("#"):
            rows.append((lineno, s.split()))
    if not rows:
        raise MeshParseError("empty mesh file")
    lineno, head = rows[0]
    try:
        nv, nc, nb = (int(x) for x in head)
    except ValueError:
        raise MeshParseError("header must be 'nv nc nb'", lineno) from None
    if nv < 3 or nc < 1 or nb < 3:
        raise MeshParseError("header counts too small", lineno)
    if len(rows) != 1 + nv + nc + nb:
        raise MeshParseError(
            f"expected {nv + nc + nb} data lines after header, found {len(rows) - 1}",
            rows[-1][0])

    def take(row, conv, n):
        lineno, parts = row
        if len(parts) != n:
            raise MeshParseError(f"expected {n} fields, got {len(parts)}", lineno)
        try:
            return [conv(p) for p in parts]
        except ValueError:
            raise MeshParseError(f"malformed entry {' '.join(parts)!r}", lineno) from None

    vertices = np.array([take(r, float, 2) for r in rows[1:1 + nv]])
    if not np.all(np.isfinite(vertices)):
        raise MeshParseError("non-finite vertex coordinate")
    cells = np.array([take(r, int, 3) for r in rows[1 + nv:1 + nv + nc]], dtype=np.int64)
    btab = np.array([take(r, int, 3) for r in rows[1 + nv + nc:]], dtype=np.int64)
    for i, c in enumerate(cells):
        if c.min() < 0 or c.max() >= nv:
            raise MeshParseError("cell vertex index out of range", rows[1 + nv + i][0])
    for i, e in enumerate(btab[:, :2]):
        if e.min() < 0 or e.max() >= nv:
            raise MeshParseError("boundary vertex index out of range", rows[1 + nv + nc + i][0])

    p = vertices[cells]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    signed = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    scale = np.maximum(np.abs(d1).max(axis=1), np.abs(d2).max(axis=1)) ** 2
    for i in np.flatnonzero(np.abs(signed) <= 1e-14 * scale):
        raise MeshParseError("degenerate (zero-area) cell", rows[1 + nv + i][0])
    cw = signed < 0
    cells[cw] = cells[cw][:, [0, 2, 1]]
    ref = _longest_edge(vertices, cells)
    try:
        return Mesh(vertices, cells, btab[:, :2], btab[:, 2], ref)
    except InvalidMeshError as exc:
        raise MeshParseError(str(exc)) from None


def load_mesh(path) -> Mesh:
    with open(path) as fh:
        return read_mesh(fh.read())
