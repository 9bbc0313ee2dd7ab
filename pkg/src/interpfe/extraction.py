"""Extraction matrix ``M[i, j] = N_j(x_i)`` and interpolation diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, CapabilityError, GeometryError
from .meshgen import ForegroundMesh
from .quadrature import gauss_triangle
from .spaces import BackgroundSpace, shape_functions

DROP_TOL = 1e-14


@dataclass(eq=False)
class ExtractionMatrix:
    """Sparse nu x n map from active background to foreground coefficients."""

    matrix: sp.csr_matrix
    active_map: np.ndarray
    node_coords: np.ndarray
    n_background: int
    background_degree: int
    foreground_degree: int

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def limiting_degree(self) -> int:
        return min(self.background_degree, self.foreground_degree)

    def expand(self, d_active: np.ndarray) -> np.ndarray:
        """Scatter active coefficients into the full background numbering."""
        full = np.zeros(self.n_background)
        full[self.active_map] = d_active
        return full

    def restrict(self, d_full: np.ndarray) -> np.ndarray:
        return np.asarray(d_full)[self.active_map]


def build_extraction(space: BackgroundSpace, mesh: ForegroundMesh, kappa: int) -> ExtractionMatrix:
    """Sample the background basis at the foreground Lagrange nodes.

    Background functions vanishing at every node are pruned; ``active_map``
    records the surviving original indices in increasing order.
    """
    nodes, _ = mesh.lagrange_nodes(kappa)
    inside = space.grid.contains(nodes)
    if not np.all(inside):
        bad = nodes[~inside][0]
        raise GeometryError(f"foreground node ({bad[0]!r}, {bad[1]!r}) lies outside "
                            f"the background grid {space.grid.bounds}")
    ev = space.evaluate(nodes, 0)
    nu, nloc = ev.values.shape
    rows = np.repeat(np.arange(nu), nloc)
    cols = ev.indices.ravel()
    vals = ev.values.ravel()
    keep = np.abs(vals) >= DROP_TOL
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    active = np.unique(cols)
    remap = np.full(space.n_dofs, -1, dtype=np.int64)
    remap[active] = np.arange(active.size)
    M = sp.csr_matrix((vals, (rows, remap[cols])), shape=(nu, active.size))
    M.sum_duplicates()
    M.sort_indices()
    return ExtractionMatrix(M, active, nodes, space.n_dofs, space.degree, kappa)


def _as_sparse(M):
    if isinstance(M, ExtractionMatrix):
        return M.matrix
    return sp.csr_matrix(M)


def interpolate(M, d) -> np.ndarray:
    """Foreground coefficients ``c = M d``."""
    A = _as_sparse(M)
    d = np.asarray(d, dtype=float)
    if d.ndim != 1 or d.size != A.shape[1]:
        raise ArgumentError(f"coefficient vector has length {d.size}, expected {A.shape[1]}")
    return A @ d


def check_partition_of_unity(M) -> float:
    A = _as_sparse(M)
    if A.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.asarray(A.sum(axis=1)).ravel() - 1.0)))


def vector_extraction(M, n_comp: int = 2) -> sp.csr_matrix:
    """Block-diagonal extraction for ``n_comp`` components (block layout)."""
    return sp.block_diag([_as_sparse(M)] * n_comp, format="csr")


def foreground_values(mesh: ForegroundMesh, kappa: int, c, xi, max_deriv=0):
    """Evaluate a foreground field at reference points ``xi`` of every element.

    Returns ``(x, u, grad)`` with shapes (nt, nq, 2), (nt, nq) and
    (nt, nq, 2) (``grad`` is None for max_deriv = 0).
    """
    _, dofmap = mesh.lagrange_nodes(kappa)
    V, T = mesh.vertices, mesh.triangles
    N, dN, _ = shape_functions(kappa, xi)
    x0 = V[T[:, 0]]
    J = np.stack([V[T[:, 1]] - x0, V[T[:, 2]] - x0], axis=-1)
    x = x0[:, None, :] + np.einsum("tij,qj->tqi", J, xi)
    cl = np.asarray(c)[dofmap]
    u = np.einsum("ql,tl->tq", N, cl)
    grad = None
    if max_deriv >= 1:
        Jinv = np.linalg.inv(J)
        G = np.einsum("tba,qlb->tqla", Jinv, dN)
        grad = np.einsum("tqla,tl->tqa", G, cl)
    return x, u, grad


def reproduction_error(space: BackgroundSpace, mesh: ForegroundMesh, kappa: int,
                       exponents, M: ExtractionMatrix | None = None) -> float:
    """Max error of the interpolated background representation of ``x^a y^b``.

    The monomial is fitted in the background space (Greville collocation or
    nodal interpolation), extracted, and compared with the exact monomial at
    the foreground nodes and at interior quadrature points of every element.
    """
    a, b = exponents
    if M is None:
        M = build_extraction(space, mesh, kappa)
    d = space.interpolate_function(lambda x, y: x ** a * y ** b)
    c = interpolate(M, M.restrict(d))
    nodes = M.node_coords
    err = np.max(np.abs(c - nodes[:, 0] ** a * nodes[:, 1] ** b))
    rule = gauss_triangle(2 * kappa + 2)
    x, u, _ = foreground_values(mesh, kappa, c, rule.ref)
    err_q = np.max(np.abs(u - x[..., 0] ** a * x[..., 1] ** b))
    return float(max(err, err_q))


def check_polynomial_reproduction(space: BackgroundSpace, mesh: ForegroundMesh, kappa: int,
                                  p: int) -> float:
    """Max reproduction error over all monomials of total degree <= p."""
    khat = min(space.degree, kappa)
    if p > khat:
        raise CapabilityError(f"reproduction is only guaranteed up to degree {khat}, not {p}")
    M = build_extraction(space, mesh, kappa)
    return max(reproduction_error(space, mesh, kappa, (i, q - i), M)
               for q in range(p + 1) for i in range(q + 1))
