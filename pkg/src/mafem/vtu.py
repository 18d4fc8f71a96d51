"""ASCII VTK XML unstructured-grid output (linear triangles, cell type 5)."""
from xml.sax.saxutils import quoteattr

import numpy as np

VTK_TRIANGLE = 5


def _array(name, data, dtype="Float64", ncomp=1, fmt="%.17g"):
    flat = np.asarray(data).ravel()
    body = " ".join(fmt % v for v in flat)
    comp = f' NumberOfComponents="{ncomp}"' if ncomp > 1 else ""
    nm = f" Name={quoteattr(name)}" if name else ""
    return f'<DataArray type="{dtype}"{nm}{comp} format="ascii">{body}</DataArray>'


def vtu_string(mesh, point_data=None, cell_data=None):
    """Serialize ``mesh`` with optional per-vertex and per-cell float arrays."""
    point_data = point_data or {}
    cell_data = cell_data or {}
    nv, nc = mesh.num_vertices, mesh.num_cells
    pts = np.column_stack([mesh.vertices, np.zeros(nv)])
    lines = [
        '<?xml version="1.0"?>',
        '<VTKFile type="UnstructuredGrid" version="0.1" byte_order="LittleEndian">',
        "<UnstructuredGrid>",
        f'<Piece NumberOfPoints="{nv}" NumberOfCells="{nc}">',
        "<PointData>",
        *[_array(k, v) for k, v in point_data.items()],
        "</PointData>",
        "<CellData>",
        *[_array(k, v) for k, v in cell_data.items()],
        "</CellData>",
        "<Points>",
        _array(None, pts, ncomp=3),
        "</Points>",
        "<Cells>",
        _array("connectivity", mesh.cells, "Int64", fmt="%d"),
        _array("offsets", 3 * np.arange(1, nc + 1), "Int64", fmt="%d"),
        _array("types", np.full(nc, VTK_TRIANGLE), "UInt8", fmt="%d"),
        "</Cells>",
        "</Piece>",
        "</UnstructuredGrid>",
        "</VTKFile>",
    ]
    return "\n".join(lines) + "\n"


def write_solution_vtu(path, dofmap, state, report=None):
    """Mesh with ``u`` at vertices and ``theta_K``/``zeta_K`` per cell."""
    mesh = dofmap.mesh
    # vertex DOFs come first in the global numbering
    pdata = {"u": np.asarray(state.u)[: mesh.num_vertices]}
    cdata = {}
    if report is not None:
        cdata = {"theta_K": report.theta_K, "zeta_K": report.zeta_K}
    with open(path, "w") as fh:
        fh.write(vtu_string(mesh, pdata, cdata))
