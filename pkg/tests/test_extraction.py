from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from interpfe.domains import AxisSquare, RotatedSquare
from interpfe.errors import ArgumentError, CapabilityError, GeometryError
from interpfe.extraction import (build_extraction, check_partition_of_unity,
                                 check_polynomial_reproduction, interpolate, reproduction_error)
from interpfe.meshgen import build_mesh, generate_fitted_foreground, generate_unfitted_foreground
from interpfe.spaces import BackgroundGrid, LagrangeSpace, TensorBSplineSpace, shape_functions

from conftest import unit_grid


def _single_triangle_setup():
    space = TensorBSplineSpace(unit_grid(1), 1)
    mesh = build_mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]], parent_cell=[0])
    return space, mesh


def _rotated(R, kind="tensor-bspline", k=1, fitted=True):
    grid = BackgroundGrid.from_bounds((-1, 1, -1, 1), 2.0 ** -(R + 1))
    space = TensorBSplineSpace(grid, k) if kind == "tensor-bspline" else LagrangeSpace(grid, k)
    dom = RotatedSquare()
    mesh = generate_fitted_foreground(grid, dom) if fitted else generate_unfitted_foreground(dom, grid.h)
    return space, mesh


ALL_CONFIGS = [(kind, k, kappa, fitted) for kind in ("tensor-bspline", "simplicial-lagrange")
               for k in (1, 2) for kappa in (1, 2) for fitted in (True, False)]


# ------------------------------------------------------- worked examples

def test_single_triangle_p1_rows_and_pruning():
    space, mesh = _single_triangle_setup()
    M = build_extraction(space, mesh, 1)
    np.testing.assert_array_equal(M.matrix.toarray(), np.eye(4)[:3, :3])
    np.testing.assert_array_equal(M.active_map, [0, 1, 2])  # the (1, 1) bilinear is pruned
    assert M.shape == (3, 3)


def test_single_triangle_p2_midpoint_row():
    space, mesh = _single_triangle_setup()
    M = build_extraction(space, mesh, 2)
    assert M.shape == (6, 4)
    mid = np.flatnonzero(np.all(np.isclose(M.node_coords, 0.5), axis=1))
    assert len(mid) == 1
    np.testing.assert_allclose(M.matrix.toarray()[mid[0]], [0.25] * 4)


def test_identical_spaces_give_permutation():
    grid = unit_grid(3)
    space = LagrangeSpace(grid, 1)
    mesh = generate_fitted_foreground(grid, AxisSquare())
    M = build_extraction(space, mesh, 1).matrix.toarray()
    assert M.shape[0] == M.shape[1] == space.n_dofs
    np.testing.assert_array_equal(np.sort(M, axis=None)[-M.shape[0]:], 1.0)
    np.testing.assert_array_equal(M.sum(axis=0), 1.0)
    np.testing.assert_array_equal(M.sum(axis=1), 1.0)
    assert np.count_nonzero(M) == M.shape[0]


def test_interpolate_examples():
    space, mesh = _rotated(2)
    M = build_extraction(space, mesh, 2)
    n = M.shape[1]
    np.testing.assert_allclose(interpolate(M, np.ones(n)), 1.0, atol=1e-14)
    np.testing.assert_array_equal(interpolate(M, np.zeros(n)), 0.0)
    d = M.restrict(space.interpolate_function(lambda x, y: x))
    assert np.max(np.abs(interpolate(M, d) - M.node_coords[:, 0])) <= 1e-13


def test_interpolate_dimension_mismatch():
    space, mesh = _single_triangle_setup()
    M = build_extraction(space, mesh, 1)
    with pytest.raises(ArgumentError):
        interpolate(M, np.ones(4))


def test_node_outside_grid():
    space = TensorBSplineSpace(unit_grid(1), 1)
    mesh = build_mesh([[0.0, 0.0], [1.5, 0.0], [0.0, 1.0]], [[0, 1, 2]])
    with pytest.raises(GeometryError, match="outside"):
        build_extraction(space, mesh, 1)


# ------------------------------------------------------- partition of unity

@pytest.mark.parametrize("kind,k,kappa,fitted", ALL_CONFIGS)
def test_row_sums_and_sparsity(kind, k, kappa, fitted):
    space, mesh = _rotated(2, kind, k, fitted)
    M = build_extraction(space, mesh, kappa)
    assert check_partition_of_unity(M) <= 1e-12
    nnz = np.diff(M.matrix.indptr)
    assert np.all(nnz >= 1)
    if kind == "tensor-bspline":
        assert np.all(nnz <= (k + 1) ** 2)
    assert np.all(np.abs(M.matrix.data) >= 1e-14)
    assert np.all(np.asarray(abs(M.matrix).sum(axis=0)).ravel() > 0)  # no empty columns


def test_partition_check_identity_and_corruption():
    assert check_partition_of_unity(sp.identity(5, format="csr")) == 0.0
    space, mesh = _rotated(1)
    M = build_extraction(space, mesh, 1).matrix.copy()
    M.data[3] += 0.1
    assert check_partition_of_unity(M) >= 0.1 - 1e-15


# ----------------------------------------------------- polynomial reproduction

@pytest.mark.parametrize("kind,k,kappa,fitted", ALL_CONFIGS)
def test_reproduction_up_to_limiting_degree(kind, k, kappa, fitted):
    space, mesh = _rotated(1, kind, k, fitted)
    khat = min(k, kappa)
    assert check_polynomial_reproduction(space, mesh, kappa, 0) <= 1e-13
    assert check_polynomial_reproduction(space, mesh, kappa, khat) <= 1e-12
    with pytest.raises(CapabilityError):
        check_polynomial_reproduction(space, mesh, kappa, khat + 1)


def test_bilinear_monomial_not_reproduced_by_p1():
    space, mesh = _rotated(1)
    err = reproduction_error(space, mesh, 1, (1, 1))
    assert err > 1e-3  # xy lies outside the P1 foreground space


def test_bilinear_monomial_reproduced_by_p2_on_fitted_mesh():
    space, mesh = _rotated(1)
    assert reproduction_error(space, mesh, 2, (1, 1)) <= 1e-12


def test_exact_recovery_of_bilinears_at_random_points(rng):
    space, mesh = _rotated(1)
    M = build_extraction(space, mesh, 2)
    Md = M.matrix.toarray()
    _, dofmap = mesh.lagrange_nodes(2)
    xi = rng.dirichlet([1, 1, 1], size=100)[:, 1:]
    N, _, _ = shape_functions(2, xi)
    V, T = mesh.vertices, mesh.triangles
    x0 = V[T[:, 0]]
    J = np.stack([V[T[:, 1]] - x0, V[T[:, 2]] - x0], axis=-1)
    worst = 0.0
    for t in range(len(T)):
        x = x0[t] + xi @ J[t].T
        interp = N @ Md[dofmap[t]]  # (100, n_active): interpolated basis at x
        ev = space.evaluate(x, locate_at=np.repeat(V[T[t]].mean(axis=0)[None], len(x), axis=0))
        exact = np.zeros_like(interp)
        col = np.searchsorted(M.active_map, ev.indices)
        valid = M.active_map[np.clip(col, 0, len(M.active_map) - 1)] == ev.indices
        rows = np.repeat(np.arange(len(x))[:, None], ev.indices.shape[1], axis=1)
        np.add.at(exact, (rows[valid], col[valid]), ev.values[valid])
        worst = max(worst, np.max(np.abs(interp - exact)))
    assert worst <= 1e-12


def test_locality_of_interpolated_basis():
    space, mesh = _rotated(2, k=2)
    M = build_extraction(space, mesh, 2)
    Md = M.matrix.toarray()
    nodes, dofmap = mesh.lagrange_nodes(2)
    for col, j in enumerate(M.active_map[::7]):
        xmin, xmax, ymin, ymax = space.support(j)
        inside = ((nodes[:, 0] > xmin) & (nodes[:, 0] < xmax)
                  & (nodes[:, 1] > ymin) & (nodes[:, 1] < ymax))
        far = ~inside[dofmap].any(axis=1)
        c = np.searchsorted(M.active_map, j)
        assert np.all(Md[dofmap[far], c] == 0.0)


def test_shared_nodes_are_merged():
    space, mesh = _rotated(2)
    nodes1, _ = mesh.lagrange_nodes(1)
    nodes2, dm2 = mesh.lagrange_nodes(2)
    assert len(np.unique(nodes1, axis=0)) == len(nodes1) == mesh.n_vertices
    assert len(np.unique(nodes2, axis=0)) == len(nodes2)
    # Euler: V - E + F = 1 for a simply connected triangulation
    n_edges = len(nodes2) - len(nodes1)
    assert len(nodes1) - n_edges + mesh.n_triangles == 1
