"""File formats: legacy VTK, JSON meshes, Matrix Market and text vectors.

Floats are always written with 17 significant digits (or Python's shortest
round-trip ``repr`` in JSON), so every export reads back bit-exactly.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import ArgumentError
from .meshgen import ForegroundMesh

_MESH_FIELDS = ("vertices", "triangles", "facet_tri", "facet_edge", "facet_marker",
                "facet_normal", "parent_cell")
_INT_FIELDS = {"triangles", "facet_tri", "facet_edge", "facet_marker", "parent_cell"}


def _fmt(v) -> str:
    return "%.17g" % v


def write_vtk(path, mesh: ForegroundMesh, point_data: dict | None = None,
              cell_data: dict | None = None, title: str = "interpfe foreground mesh") -> Path:
    """Legacy ASCII unstructured grid of the straight (P1) triangles.

    ``point_data`` values are per mesh vertex; ``cell_data`` always gets the
    parent background cell (``-1`` for unfitted meshes) under ``parent``.
    """
    path = Path(path)
    coords, tris = mesh.lagrange_nodes(1)
    nv, nt = len(coords), len(tris)
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in coords]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tris]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    cells = {"parent": np.asarray(mesh.parent_cell, dtype=np.int64)}
    cells.update(cell_data or {})
    lines.append(f"CELL_DATA {nt}")
    for name, vals in cells.items():
        lines += _vtk_scalars(name, vals, nt)
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, vals in point_data.items():
            lines += _vtk_scalars(name, vals, nv)
    path.write_text("\n".join(lines) + "\n")
    return path


def _vtk_scalars(name, vals, n):
    vals = np.asarray(vals)
    if vals.shape != (n,):
        raise ArgumentError(f"field {name!r} has shape {vals.shape}, expected ({n},)")
    if " " in name:
        raise ArgumentError("VTK field names may not contain spaces")
    integral = np.issubdtype(vals.dtype, np.integer)
    out = [f"SCALARS {name} {'int' if integral else 'double'} 1", "LOOKUP_TABLE default"]
    out += [str(int(v)) for v in vals] if integral else [_fmt(v) for v in vals]
    return out


def solution_point_data(mesh: ForegroundMesh, c, n_comp: int = 1) -> dict:
    """Vertex values of a foreground solution, named ``u`` or ``u_x``/``u_y``.

    Higher-order nodes follow the vertices in the node numbering, so the
    vertex values are the leading entries of each component block.
    """
    c = np.asarray(c, dtype=float)
    nv = len(mesh.lagrange_nodes(1)[0])
    if n_comp == 1:
        return {"u": c[:nv]}
    nn = c.size // n_comp
    return {"u_x": c[:nv], "u_y": c[nn:nn + nv]}


def mesh_to_dict(mesh: ForegroundMesh) -> dict:
    d = {name: np.asarray(getattr(mesh, name)).tolist() for name in _MESH_FIELDS}
    d["info"] = {k: v for k, v in mesh.info.items() if isinstance(v, (int, float, str, bool))}
    return d


def mesh_from_dict(d: dict) -> ForegroundMesh:
    missing = [k for k in _MESH_FIELDS if k not in d]
    if missing:
        raise ArgumentError(f"mesh document lacks {', '.join(missing)}")
    kw = {}
    for name in _MESH_FIELDS:
        dtype = np.int64 if name in _INT_FIELDS else float
        arr = np.asarray(d[name], dtype=dtype)
        if name == "vertices" or name == "facet_normal":
            arr = arr.reshape(-1, 2)
        elif name == "triangles":
            arr = arr.reshape(-1, 3)
        kw[name] = arr
    return ForegroundMesh(**kw, info=dict(d.get("info", {})))


def write_mesh_json(path, mesh: ForegroundMesh) -> Path:
    """JSON mirror of the mesh arrays; floats use the shortest exact repr."""
    path = Path(path)
    path.write_text(json.dumps(mesh_to_dict(mesh)))
    return path


def read_mesh_json(path) -> ForegroundMesh:
    return mesh_from_dict(json.loads(Path(path).read_text()))


def write_matrix_market(path, A, comment: str = "") -> Path:
    """Coordinate Matrix Market file with 17 significant digits."""
    path = Path(path)
    A = sp.coo_matrix(A)
    with open(path, "wb") as fh:
        scipy.io.mmwrite(fh, A, comment=comment, precision=17)
    return path


def read_matrix_market(path) -> sp.csr_matrix:
    return sp.csr_matrix(scipy.io.mmread(str(path)))


def write_vector(path, v) -> Path:
    path = Path(path)
    np.savetxt(path, np.asarray(v, dtype=float).reshape(-1), fmt="%.17g")
    return path


def read_vector(path) -> np.ndarray:
    return np.atleast_1d(np.loadtxt(path, dtype=float))
