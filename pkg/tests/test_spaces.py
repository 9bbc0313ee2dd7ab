from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interpfe.errors import ArgumentError, CapabilityError, OutOfRangeError
from interpfe.spaces import (BackgroundGrid, LagrangeSpace, TensorBSplineSpace,
                             eval_background_basis, eval_bspline_1d, eval_foreground_shape,
                             make_background_space, make_open_uniform_knots, reference_nodes,
                             shape_functions)

SPACE_CONFIGS = [(kind, k) for kind in ("tensor-bspline", "simplicial-lagrange") for k in (1, 2)]


def _space(kind, k, cells=5, bounds=(-1.0, 1.0, -1.0, 1.0)):
    grid = BackgroundGrid.from_bounds(bounds, (bounds[1] - bounds[0]) / cells)
    return make_background_space(kind, grid, k)


# ------------------------------------------------------------------ knots

def test_minimal_knot_vector():
    np.testing.assert_array_equal(make_open_uniform_knots(1, 1, 0, 1).values, [0, 0, 1, 1])


def test_quadratic_two_spans():
    np.testing.assert_allclose(make_open_uniform_knots(2, 2, 0, 1).values, [0, 0, 0, 0.5, 1, 1, 1])


def test_uniform_spacing_interior_breakpoints():
    kv = make_open_uniform_knots(2, 4, -1, 1)
    # 2 (k + 1) end knots plus n_spans - 1 interior breakpoints
    assert len(kv.values) == 9
    np.testing.assert_allclose(kv.values[3:-3], [-0.5, 0.0, 0.5])


@pytest.mark.parametrize("args", [(0, 2, 0, 1), (1.5, 2, 0, 1), (1, 0, 0, 1), (1, 2, 1, 0)])
def test_invalid_knot_arguments(args):
    with pytest.raises((ArgumentError, CapabilityError)):
        make_open_uniform_knots(*args)


# ------------------------------------------------------------ 1D B-splines

def test_hat_symmetry():
    vals = [v for _, v, _ in eval_bspline_1d(make_open_uniform_knots(1, 1, 0, 1), 0.5)]
    np.testing.assert_allclose(vals, [0.5, 0.5])


def test_quadratic_span_center_hand_value():
    kv = make_open_uniform_knots(2, 4, 0, 4)
    out = eval_bspline_1d(kv, 1.5)  # centre of the uniform interior span [1, 2]
    vals = [v for _, v, _ in out]
    np.testing.assert_allclose(vals, [0.125, 0.75, 0.125], atol=1e-15)


def test_right_continuous_at_breakpoints_left_at_end():
    kv = make_open_uniform_knots(1, 2, 0, 1)
    idx = [i for i, _, _ in eval_bspline_1d(kv, 0.5)]
    assert idx == [1, 2]
    idx_end = [i for i, _, _ in eval_bspline_1d(kv, 1.0)]
    assert idx_end == [1, 2]


def test_outside_domain_raises():
    with pytest.raises(OutOfRangeError):
        eval_bspline_1d(make_open_uniform_knots(2, 3, 0, 1), 1.5)


@settings(max_examples=200, deadline=None)
@given(k=st.sampled_from([1, 2]), n=st.integers(1, 8), x=st.floats(0.0, 1.0))
def test_bspline_partition_and_nonnegativity(k, n, x):
    out = eval_bspline_1d(make_open_uniform_knots(k, n, 0.0, 1.0), x, max_deriv=1)
    vals = np.array([v for _, v, _ in out])
    ders = np.array([d[0] for _, _, d in out])
    assert len(out) == k + 1
    assert np.all(vals >= -1e-15)
    assert abs(vals.sum() - 1.0) <= 1e-14
    assert abs(ders.sum()) <= 1e-10


# ------------------------------------------------------------ foreground

def test_p1_vertex_and_centroid():
    np.testing.assert_array_equal(eval_foreground_shape(1, [1, 0, 0]).values, [1, 0, 0])
    np.testing.assert_allclose(eval_foreground_shape(1, [1 / 3, 1 / 3, 1 / 3]).values, [1 / 3] * 3)


@pytest.mark.parametrize("kappa", [1, 2])
def test_kronecker_property(kappa):
    N, _, _ = shape_functions(kappa, reference_nodes(kappa))
    np.testing.assert_allclose(N, np.eye(len(N)), atol=1e-14)


def test_p2_edge_midpoint_node():
    sh = eval_foreground_shape(2, [0.5, 0.5, 0.0])  # midpoint of edge v0-v1 is node 3
    expected = np.zeros(6)
    expected[3] = 1.0
    np.testing.assert_allclose(sh.values, expected, atol=1e-15)


def test_unsupported_foreground_degree():
    with pytest.raises(CapabilityError):
        eval_foreground_shape(3, [1, 0, 0])


def test_invalid_barycentric():
    with pytest.raises(ArgumentError):
        eval_foreground_shape(1, [0.7, 0.7, -0.4])


@pytest.mark.parametrize("kappa", [1, 2])
def test_foreground_derivatives_by_finite_differences(kappa, rng):
    xi = rng.dirichlet([1, 1, 1], size=20)[:, 1:]
    _, dN, d2N = shape_functions(kappa, xi)
    step = 1e-6
    for a in range(2):
        e = np.zeros(2)
        e[a] = step
        Np, dNp, _ = shape_functions(kappa, xi + e)
        Nm, dNm, _ = shape_functions(kappa, xi - e)
        np.testing.assert_allclose((Np - Nm) / (2 * step), dN[:, :, a], atol=1e-8)
        np.testing.assert_allclose((dNp - dNm) / (2 * step), d2N[:, :, :, a], atol=1e-6)


@pytest.mark.parametrize("kappa", [1, 2])
def test_foreground_partition_of_unity(kappa, rng):
    xi = rng.dirichlet([1, 1, 1], size=500)[:, 1:]
    N, dN, _ = shape_functions(kappa, xi)
    np.testing.assert_allclose(N.sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(dN.sum(axis=1), 0.0, atol=1e-13)


# ------------------------------------------------------------- background

def test_bilinear_unit_cell_corner_and_centre():
    space = _space("tensor-bspline", 1, cells=1, bounds=(0, 1, 0, 1))
    corner = eval_background_basis(space, (0.0, 0.0))
    assert [i for i, *_ in corner] == [0, 1, 2, 3]
    np.testing.assert_allclose([v for _, v, *_ in corner], [1, 0, 0, 0])
    centre = eval_background_basis(space, (0.5, 0.5))
    np.testing.assert_allclose([v for _, v, *_ in centre], [0.25] * 4)


def test_background_outside_grid():
    space = _space("tensor-bspline", 2)
    with pytest.raises(OutOfRangeError):
        eval_background_basis(space, (1.5, 0.0))


@pytest.mark.parametrize("kind,k", SPACE_CONFIGS)
def test_background_partition_of_unity_10k_points(kind, k, rng):
    space = _space(kind, k, cells=7)
    pts = rng.uniform(-1, 1, size=(10_000, 2))
    ev = space.evaluate(pts, max_deriv=1)
    assert np.max(np.abs(ev.values.sum(axis=1) - 1.0)) <= 1e-12
    assert np.max(np.abs(ev.grads.sum(axis=1))) <= 1e-10


@pytest.mark.parametrize("kind,k", SPACE_CONFIGS)
def test_local_support_count(kind, k, rng):
    space = _space(kind, k)
    ev = space.evaluate(rng.uniform(-1, 1, size=(50, 2)))
    expected = (k + 1) ** 2 if kind == "tensor-bspline" else (k + 1) * (k + 2) // 2
    assert ev.indices.shape[1] == expected
    assert np.all(ev.indices >= 0) and np.all(ev.indices < space.n_dofs)
    assert all(len(set(row)) == expected for row in ev.indices)


def test_bspline_dof_count():
    for k in (1, 2):
        for n in (1, 3, 6):
            space = _space("tensor-bspline", k, cells=n)
            assert space.n_dofs == (n + k) ** 2


def _away_from_grid_lines(space, pts, margin):
    x0, y0 = space.grid.origin
    s = (pts - [x0, y0]) / space.h
    frac = s - np.floor(s)
    ok = np.all((frac > margin) & (frac < 1 - margin), axis=1)
    if isinstance(space, LagrangeSpace):  # also away from the cell diagonal
        ok &= np.abs(frac[:, 0] - frac[:, 1]) > margin
    return pts[ok]


@pytest.mark.parametrize("kind,k", SPACE_CONFIGS)
def test_background_derivatives_by_finite_differences(kind, k, rng):
    space = _space(kind, k)
    pts = _away_from_grid_lines(space, rng.uniform(-1, 1, size=(200, 2)), 0.01)[:40]
    step = 1e-6 * space.h
    ev = space.evaluate(pts, max_deriv=2)
    for a in range(2):
        e = np.zeros(2)
        e[a] = step
        evp = space.evaluate(pts + e, max_deriv=1, locate_at=pts)
        evm = space.evaluate(pts - e, max_deriv=1, locate_at=pts)
        fd_grad = (evp.values - evm.values) / (2 * step)
        fd_hess = (evp.grads - evm.grads) / (2 * step)
        scale_g = np.max(np.abs(ev.grads))
        scale_h = max(np.max(np.abs(ev.hessians)), 1.0 / space.h ** 2)
        assert np.max(np.abs(fd_grad - ev.grads[:, :, a])) <= 1e-5 * scale_g
        assert np.max(np.abs(fd_hess - ev.hessians[:, :, :, a])) <= 1e-5 * scale_h


@pytest.mark.parametrize("kind,k", SPACE_CONFIGS)
def test_interpolate_function_reproduces_degree_k(kind, k, rng):
    space = _space(kind, k)
    fn = (lambda x, y: 1 + 2 * x - y) if k == 1 else (lambda x, y: 1 + x - y + x * x - 3 * x * y + y * y)
    d = space.interpolate_function(fn)
    pts = rng.uniform(-1, 1, size=(300, 2))
    ev = space.evaluate(pts)
    vals = np.sum(ev.values * d[ev.indices], axis=1)
    np.testing.assert_allclose(vals, fn(pts[:, 0], pts[:, 1]), atol=1e-12)


def test_lagrange_on_edge_points_gives_exact_zeros():
    # points on the cell diagonal and edges: snapped, so the off-edge function is exactly zero
    space = _space("simplicial-lagrange", 2, cells=3, bounds=(0, 3, 0, 3))
    t = np.linspace(0, 1, 7)
    pts = np.column_stack([1 + t, 1 + t])  # the diagonal of cell (1, 1)
    ev = space.evaluate(pts + 3e-15)
    coords = space.node_coords()
    on_line = np.isclose(coords[:, 0], coords[:, 1])
    off = ~on_line[ev.indices]
    assert np.all(ev.values[off] == 0.0)


def test_bspline_snapping_near_breakpoint():
    space = _space("tensor-bspline", 1, cells=4, bounds=(0, 1, 0, 1))
    ev = space.evaluate([[0.25 - 1e-16, 0.5 + 2e-16]])
    nz = np.count_nonzero(ev.values)
    assert nz == 1  # exactly at a grid vertex: a single nonzero bilinear


@pytest.mark.parametrize("cls", [TensorBSplineSpace, LagrangeSpace])
def test_unsupported_background_degree(cls):
    with pytest.raises(CapabilityError):
        cls(BackgroundGrid((0.0, 0.0), 1.0, (1, 1)), 3)


def test_grid_bounds_not_multiple_of_h():
    with pytest.raises(ArgumentError):
        BackgroundGrid.from_bounds((0, 1, 0, 1), 0.3)
