"""Manufactured solutions and benchmark definitions.

Every derivative below is written out by hand; the test-suite checks them
against finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..domains import HOLE, OUTER, X_AXIS, Y_AXIS
from ..errors import ArgumentError

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ManufacturedCase:
    """Exact solution plus the problem data derived from it.

    Scalar problems provide ``u``, ``grad`` ((..., 2)) and ``hess``
    ((..., 2, 2)); elasticity provides the displacement ``u`` ((..., 2)), its
    gradient ``grad`` ((..., 2, 2), ``grad[..., a, b] = d u_a / d x_b``) and
    the exact ``stress``. ``traction`` maps boundary markers to ``t(x, n)``
    (``None`` = traction-free).
    """

    name: str
    form: str
    u: Field
    grad: Field
    hess: Field | None = None
    f: Field | None = None
    stress: Field | None = None
    traction: dict = field(default_factory=dict)
    sym_markers: tuple = ()
    domain: dict = field(default_factory=dict)
    material: dict = field(default_factory=dict)

    @property
    def g(self) -> Field:
        """Dirichlet data (the exact trace)."""
        return self.u

    @property
    def sigma(self):
        """Biharmonic boundary data: value and gradient of the exact solution."""
        return (self.u, self.grad)


def _stack(*cols):
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def _mat(a, b, c, d):
    return np.stack([_stack(a, b), _stack(c, d)], axis=-2)


ROTATED_SQUARE = {"kind": "rotated-square", "params": {}}
UNIT_SQUARE = {"kind": "axis-square", "params": {"center": [0.5, 0.5], "half_width": 0.5}}


# ---------------------------------------------------------------- Poisson

def poisson_sincos() -> ManufacturedCase:
    """``u = sin(pi (x^2 + y^2)) cos(pi (x - y))`` on the rotated square."""
    pi = math.pi

    def parts(x, y):
        r2 = x * x + y * y
        return np.sin(pi * r2), np.cos(pi * r2), np.cos(pi * (x - y)), np.sin(pi * (x - y))

    def u(x, y):
        S, _, c, _ = parts(x, y)
        return S * c

    def grad(x, y):
        S, C, c, s = parts(x, y)
        return _stack(2 * pi * x * C * c - pi * S * s, 2 * pi * y * C * c + pi * S * s)

    def hess(x, y):
        S, C, c, s = parts(x, y)
        uxx = 2 * pi * C * c - 4 * pi ** 2 * x * x * S * c - 4 * pi ** 2 * x * C * s - pi ** 2 * S * c
        uyy = 2 * pi * C * c - 4 * pi ** 2 * y * y * S * c + 4 * pi ** 2 * y * C * s - pi ** 2 * S * c
        uxy = (-4 * pi ** 2 * x * y * S * c + 2 * pi ** 2 * x * C * s
               - 2 * pi ** 2 * y * C * s + pi ** 2 * S * c)
        return _mat(uxx, uxy, uxy, uyy)

    def f(x, y):
        S, C, c, s = parts(x, y)
        lap = (4 * pi * C * c - 4 * pi ** 2 * (x * x + y * y) * S * c
               - 4 * pi ** 2 * (x - y) * C * s - 2 * pi ** 2 * S * c)
        return -lap

    return ManufacturedCase("poisson-sincos", "poisson", u, grad, hess, f, domain=ROTATED_SQUARE)


def _polynomial_case(name, form, coef, domain, f_const):
    """Quadratic ``u = c0 + c1 x + c2 y + c3 x^2 + c4 x y + c5 y^2``."""
    c0, c1, c2, c3, c4, c5 = coef

    def u(x, y):
        return c0 + c1 * x + c2 * y + c3 * x * x + c4 * x * y + c5 * y * y

    def grad(x, y):
        return _stack(c1 + 2 * c3 * x + c4 * y, c2 + c4 * x + 2 * c5 * y)

    def hess(x, y):
        z = np.zeros(np.broadcast(x, y).shape)
        return _mat(2 * c3 + z, c4 + z, c4 + z, 2 * c5 + z)

    def f(x, y):
        return np.full(np.broadcast(x, y).shape, float(f_const))

    return ManufacturedCase(name, form, u, grad, hess, f, domain=domain)


def poisson_linear(domain=None) -> ManufacturedCase:
    """Patch solution ``u = 1 + x + 2 y``."""
    return _polynomial_case("poisson-linear", "poisson", (1, 1, 2, 0, 0, 0),
                            domain or UNIT_SQUARE, 0.0)


def poisson_quadratic(domain=None) -> ManufacturedCase:
    """Patch solution ``u = 1 + x + 2 y + x^2 + 3 x y - y^2 / 2`` (``-lap u = -1``)."""
    return _polynomial_case("poisson-quadratic", "poisson", (1, 1, 2, 1, 3, -0.5),
                            domain or UNIT_SQUARE, -1.0)


# ------------------------------------------------------------- biharmonic

def biharmonic_cos(a: float = 0.05 * math.pi, b: float = 0.1) -> ManufacturedCase:
    """``u = cos(a x + b) cos(a y + b)``; ``lap^2 u = 4 a^4 u``."""

    def u(x, y):
        return np.cos(a * x + b) * np.cos(a * y + b)

    def grad(x, y):
        cx, sx, cy, sy = np.cos(a * x + b), np.sin(a * x + b), np.cos(a * y + b), np.sin(a * y + b)
        return _stack(-a * sx * cy, -a * cx * sy)

    def hess(x, y):
        cx, sx, cy, sy = np.cos(a * x + b), np.sin(a * x + b), np.cos(a * y + b), np.sin(a * y + b)
        return _mat(-a * a * cx * cy, a * a * sx * sy, a * a * sx * sy, -a * a * cx * cy)

    def f(x, y):
        return 4 * a ** 4 * u(x, y)

    return ManufacturedCase("biharmonic-cos", "biharmonic", u, grad, hess, f, domain=ROTATED_SQUARE)


def biharmonic_linear(domain=None) -> ManufacturedCase:
    """Patch solution ``u = 1 + x + y``."""
    return _polynomial_case("biharmonic-linear", "biharmonic", (1, 1, 1, 0, 0, 0),
                            domain or ROTATED_SQUARE, 0.0)


# ------------------------------------------------------------- elasticity

def lame(E: float, nu: float):
    """Plane-strain ``(lambda, mu)``."""
    return E * nu / ((1 + nu) * (1 - 2 * nu)), E / (2 * (1 + nu))


def _traction_of(stress):
    def t(x, n):
        s = stress(x[..., 0], x[..., 1])
        return np.einsum("...ab,...b->...a", s, n)
    return t


def kirsch_case(hole_radius: float = 0.25, side_factor: float = 4.0, E: float = 200e9,
                nu: float = 0.3, S: float = 1.0) -> ManufacturedCase:
    """Infinite plate with a circular hole under equal biaxial tension ``S``.

    ``sigma_rr = S (1 - a^2/r^2)``, ``sigma_tt = S (1 + a^2/r^2)``,
    ``sigma_rt = 0``; displacement ``u_r = A r + B / r`` with
    ``A = S / (2 (lambda + mu))`` and ``B = S a^2 / (2 mu)`` (plane strain).
    The exact traction is applied on the outer faces; the hole is
    traction-free and the axes carry slip conditions.
    """
    if hole_radius <= 0 or side_factor <= 2 or E <= 0:
        raise ArgumentError("need hole_radius > 0, side_factor > 2 and E > 0")
    a2 = hole_radius ** 2
    lam, mu = lame(E, nu)
    A = S / (2 * (lam + mu))
    B = S * a2 / (2 * mu)

    def stress(x, y):
        r2 = x * x + y * y
        c2 = (x * x - y * y) / r2
        s2 = 2 * x * y / r2
        q = a2 / r2
        return _mat(S * (1 - q * c2), -S * q * s2, -S * q * s2, S * (1 + q * c2))

    def u(x, y):
        r2 = x * x + y * y
        fac = A + B / r2  # u = (A + B / r^2) x
        return _stack(fac * x, fac * y)

    def grad(x, y):
        r2 = x * x + y * y
        fac = A + B / r2
        k = -2 * B / (r2 * r2)
        return _mat(fac + k * x * x, k * x * y, k * x * y, fac + k * y * y)

    return ManufacturedCase(
        "kirsch", "elasticity", u, grad, stress=stress,
        traction={OUTER: _traction_of(stress), HOLE: None}, sym_markers=(X_AXIS, Y_AXIS),
        domain={"kind": "square-with-hole-quadrant",
                "params": {"hole_radius": hole_radius, "side_factor": side_factor}},
        material={"E": E, "nu": nu, "S": S})


def elasticity_linear(e1: float = 1e-3, e2: float = -5e-4, E: float = 200e9, nu: float = 0.3,
                      hole_radius: float = 0.25, side_factor: float = 4.0) -> ManufacturedCase:
    """Homogeneous stretch ``u = (e1 x, e2 y)`` on the plate quadrant.

    It satisfies the slip conditions on both axes; its constant stress is
    applied as traction on the outer boundary and on the hole.
    """
    lam, mu = lame(E, nu)
    sxx = (2 * mu + lam) * e1 + lam * e2
    syy = lam * e1 + (2 * mu + lam) * e2

    def u(x, y):
        return _stack(e1 * x, e2 * y)

    def grad(x, y):
        z = np.zeros(np.broadcast(x, y).shape)
        return _mat(e1 + z, z, z, e2 + z)

    def stress(x, y):
        z = np.zeros(np.broadcast(x, y).shape)
        return _mat(sxx + z, z, z, syy + z)

    t = _traction_of(stress)
    return ManufacturedCase(
        "elasticity-linear", "elasticity", u, grad, stress=stress,
        traction={OUTER: t, HOLE: t}, sym_markers=(X_AXIS, Y_AXIS),
        domain={"kind": "square-with-hole-quadrant",
                "params": {"hole_radius": hole_radius, "side_factor": side_factor}},
        material={"E": E, "nu": nu})


CASES = {
    "poisson-sincos": poisson_sincos,
    "poisson-linear": poisson_linear,
    "poisson-quadratic": poisson_quadratic,
    "biharmonic-cos": biharmonic_cos,
    "biharmonic-linear": biharmonic_linear,
    "kirsch": kirsch_case,
    "elasticity-linear": elasticity_linear,
}
CASE_FORMS = {"poisson-sincos": "poisson", "poisson-linear": "poisson",
              "poisson-quadratic": "poisson", "biharmonic-cos": "biharmonic",
              "biharmonic-linear": "biharmonic", "kirsch": "elasticity",
              "elasticity-linear": "elasticity"}


def make_case(name: str, **params) -> ManufacturedCase:
    try:
        factory = CASES[name]
    except KeyError:
        raise ArgumentError(f"unknown manufactured case {name!r}; "
                            f"available: {sorted(CASES)}") from None
    return factory(**params)
