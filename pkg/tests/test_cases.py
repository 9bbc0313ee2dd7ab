from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from interpfe.domains import HOLE, OUTER
from interpfe.errors import ArgumentError
from interpfe.verify.cases import CASES, kirsch_case, lame, make_case
from interpfe.verify.norms import displacement_error, error_norms, stress_error

SCALAR = ["poisson-sincos", "poisson-linear", "poisson-quadratic", "biharmonic-cos",
          "biharmonic-linear"]
VECTOR = ["kirsch", "elasticity-linear"]


def _points(rng, case, n=100):
    if case.form == "elasticity":
        r = rng.uniform(0.3, 1.0, n)
        t = rng.uniform(0.05, np.pi / 2 - 0.05, n)
        return r * np.cos(t), r * np.sin(t)
    return rng.uniform(-0.5, 0.5, n), rng.uniform(-0.5, 0.5, n)


def _fd_grad(fn, x, y, eps):
    gx = (fn(x + eps, y) - fn(x - eps, y)) / (2 * eps)
    gy = (fn(x, y + eps) - fn(x, y - eps)) / (2 * eps)
    return np.stack([gx, gy], axis=-1)


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


@pytest.mark.parametrize("name", SCALAR)
def test_scalar_derivatives_match_finite_differences(name, rng):
    case = make_case(name)
    x, y = _points(rng, case)
    assert _rel(_fd_grad(case.u, x, y, 1e-5), case.grad(x, y)) <= 1e-6
    H = case.hess(x, y)
    fd_h = np.stack([_fd_grad(lambda a, b: case.grad(a, b)[..., i], x, y, 1e-5) for i in range(2)],
                    axis=-2)
    assert np.max(np.abs(fd_h - H)) <= 1e-6 * max(np.max(np.abs(H)), 1.0)
    np.testing.assert_allclose(H, np.swapaxes(H, -1, -2), atol=1e-14)


@pytest.mark.parametrize("name", [n for n in SCALAR if n.startswith("poisson")])
def test_poisson_source_is_minus_laplacian(name, rng):
    case = make_case(name)
    x, y = _points(rng, case)
    H = case.hess(x, y)
    lap = H[..., 0, 0] + H[..., 1, 1]
    assert np.max(np.abs(case.f(x, y) + lap)) <= 1e-10 * max(np.max(np.abs(lap)), 1.0)
    np.testing.assert_array_equal(case.g(x, y), case.u(x, y))


@pytest.mark.parametrize("name", [n for n in SCALAR if n.startswith("biharmonic")])
def test_biharmonic_source_is_bilaplacian(name, rng):
    case = make_case(name)
    x, y = _points(rng, case)
    lap = lambda a, b: np.trace(case.hess(a, b), axis1=-2, axis2=-1)  # noqa: E731
    eps = 1e-3
    bilap = (lap(x + eps, y) + lap(x - eps, y) + lap(x, y + eps) + lap(x, y - eps)
             - 4 * lap(x, y)) / eps ** 2
    f = case.f(x, y)
    assert np.max(np.abs(f - bilap)) <= 1e-6 * max(np.max(np.abs(f)), 1e-12) + 1e-10
    u, g = case.sigma
    assert u is case.u and g is case.grad


@pytest.mark.parametrize("name", VECTOR)
def test_elasticity_fields_are_consistent(name, rng):
    case = make_case(name)
    x, y = _points(rng, case)
    lam, mu = lame(case.material["E"], case.material["nu"])
    G = case.grad(x, y)
    fd = np.stack([_fd_grad(lambda a, b: case.u(a, b)[..., i], x, y, 1e-6) for i in range(2)],
                  axis=-2)
    assert np.max(np.abs(fd - G)) <= 1e-6 * np.max(np.abs(G))
    eps = 0.5 * (G + np.swapaxes(G, -1, -2))
    sig = 2 * mu * eps + lam * np.trace(eps, axis1=-2, axis2=-1)[..., None, None] * np.eye(2)
    S = case.stress(x, y)
    assert _rel(sig, S) <= 1e-10
    # equilibrium: div sigma = 0
    div = sum(_fd_grad(lambda a, b: case.stress(a, b)[..., :, j], x, y, 1e-5)[..., j]
              for j in range(2))
    assert np.max(np.abs(div)) <= 1e-6 * np.max(np.abs(S))
    n = np.stack([np.cos(0.3) + 0 * x, np.sin(0.3) + 0 * x], axis=-1)
    t = case.traction[OUTER](np.stack([x, y], axis=-1), n)
    np.testing.assert_allclose(t, np.einsum("...ab,...b->...a", S, n), rtol=1e-14)


def test_kirsch_far_field():
    case = kirsch_case(S=2.0)
    a = 0.25
    for th in np.linspace(0, np.pi / 2, 7):
        x, y = 20 * a * np.cos(th), 20 * a * np.sin(th)
        s = case.stress(np.array(x), np.array(y))
        assert np.max(np.abs(s - 2.0 * np.eye(2))) <= 0.01 * 2.0


def test_kirsch_hole_traction_free():
    case = kirsch_case()
    th = np.linspace(0, np.pi / 2, 50)
    x, y = 0.25 * np.cos(th), 0.25 * np.sin(th)
    n = np.stack([np.cos(th), np.sin(th)], axis=-1)
    t = np.einsum("...ab,...b->...a", case.stress(x, y), n)
    assert np.max(np.abs(t)) <= 1e-10
    assert case.traction[HOLE] is None
    # stress concentration factor 2 for equal biaxial tension
    np.testing.assert_allclose(np.trace(case.stress(x, y), axis1=-2, axis2=-1), 2.0, rtol=1e-13)


def test_kirsch_diagonal_symmetry(rng):
    case = kirsch_case()
    x, y = rng.uniform(0.3, 1, 50), rng.uniform(0.3, 1, 50)
    s1, s2 = case.stress(x, y), case.stress(y, x)
    np.testing.assert_allclose(s1[..., 0, 0], s2[..., 1, 1], rtol=1e-13)
    np.testing.assert_allclose(s1[..., 0, 1], s2[..., 1, 0], rtol=1e-13)


def test_case_registry_and_errors():
    assert set(CASES) == set(SCALAR) | set(VECTOR)
    with pytest.raises(ArgumentError):
        make_case("navier-stokes")
    with pytest.raises(ArgumentError):
        kirsch_case(hole_radius=-1)


# ---------------------------------------------------------------- norms

def test_exact_linear_has_zero_error(rotated_square_mesh):
    case = make_case("poisson-linear")
    nodes, _ = rotated_square_mesh.lagrange_nodes(1)
    e = error_norms(rotated_square_mesh, 1, case.u(nodes[:, 0], nodes[:, 1]), case)
    assert e["L2"] <= 1e-12 and e["H1_semi"] <= 1e-12 and e["H2_broken"] <= 1e-12


def test_constant_field_against_zero(rotated_square_mesh):
    zero = SimpleNamespace(u=lambda x, y: 0 * x, grad=lambda x, y: np.zeros(np.shape(x) + (2,)))
    for kappa in (1, 2):
        nodes, _ = rotated_square_mesh.lagrange_nodes(kappa)
        e = error_norms(rotated_square_mesh, kappa, np.ones(len(nodes)), zero)
        assert e["L2"] == pytest.approx(np.sqrt(0.5), rel=1e-13)
        assert e["H1_semi"] <= 1e-13 and e["H2_broken"] is None


def test_reference_triangle_h1(reference_triangle_mesh):
    zero = SimpleNamespace(u=lambda x, y: 0 * x, grad=lambda x, y: np.zeros(np.shape(x) + (2,)))
    nodes, _ = reference_triangle_mesh.lagrange_nodes(1)
    e = error_norms(reference_triangle_mesh, 1, nodes[:, 0], zero)
    assert e["H1_semi"] == pytest.approx(np.sqrt(0.5), rel=1e-14)
    assert e["L2"] == pytest.approx(np.sqrt(1 / 12), rel=1e-14)


def test_exact_stretch_has_zero_stress_error():
    from interpfe.domains import PlateWithHoleQuadrant
    from interpfe.meshgen import generate_fitted_foreground
    from interpfe.spaces import BackgroundGrid

    dom = PlateWithHoleQuadrant()
    mesh = generate_fitted_foreground(BackgroundGrid.from_bounds(dom.bbox(), 0.125), dom)
    case = make_case("elasticity-linear")
    lam, mu = lame(200e9, 0.3)
    nodes, _ = mesh.lagrange_nodes(1)
    uv = case.u(nodes[:, 0], nodes[:, 1])
    c = np.concatenate([uv[:, 0], uv[:, 1]])
    assert stress_error(mesh, 1, c, case.stress, lam, mu) <= 1e-6  # stresses are O(1e8)
    l2, h1 = displacement_error(mesh, 1, c, case.u, case.grad)
    assert l2 <= 1e-16 and h1 <= 1e-15
