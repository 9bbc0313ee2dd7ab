"""Background function spaces and foreground Lagrange shape functions.

Two background kinds live on a uniform structured grid:

* tensor-product B-splines of degree ``k`` at maximal continuity, dofs
  numbered lexicographically (x fastest);
* C0 Lagrange elements of degree ``k`` on the triangulation obtained by
  splitting every grid cell along its lower-left/upper-right diagonal.
  Dofs are the points of the ``(k*nx + 1) x (k*ny + 1)`` lattice, again
  x fastest.

Foreground shape functions are the usual P1/P2 Lagrange functions on the
reference triangle with local ordering v0, v1, v2, e01, e12, e20.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ArgumentError, CapabilityError, GeometryError, OutOfRangeError

SUPPORTED_DEGREES = (1, 2)


# ----------------------------------------------------------------------------
# knot vectors and univariate B-splines
# ----------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class KnotVector:
    """Open knot vector: end knots repeated ``degree + 1`` times."""

    values: np.ndarray
    degree: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        k = int(self.degree)
        if k < 0:
            raise ArgumentError("degree must be nonnegative")
        if v.ndim != 1 or v.size < 2 * (k + 1) or np.any(np.diff(v) < 0):
            raise ArgumentError("knot values must be a nondecreasing sequence "
                                "with at least 2(k+1) entries")
        if np.any(v[: k + 1] != v[0]) or np.any(v[-(k + 1):] != v[-1]):
            raise ArgumentError("knot vector is not open")
        interior = v[k + 1: v.size - k - 1]
        if np.any(interior == v[0]) or np.any(interior == v[-1]) \
                or np.any(np.diff(interior) <= 0):
            raise ArgumentError("interior breakpoints must be simple "
                                "(maximal continuity)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "degree", k)

    @property
    def a(self) -> float:
        return float(self.values[0])

    @property
    def b(self) -> float:
        return float(self.values[-1])

    @property
    def breakpoints(self) -> np.ndarray:
        return self.values[self.degree: self.values.size - self.degree]

    @property
    def n_spans(self) -> int:
        return self.breakpoints.size - 1

    @property
    def n_funcs(self) -> int:
        return self.values.size - self.degree - 1

    def greville(self) -> np.ndarray:
        k = self.degree
        if k == 0:
            bp = self.breakpoints
            return 0.5 * (bp[:-1] + bp[1:])
        idx = np.arange(self.n_funcs)[:, None] + np.arange(1, k + 1)
        return self.values[idx].mean(axis=1)

    def find_span(self, x) -> np.ndarray:
        """Span index (into the breakpoint list) of each ``x``.

        Right-continuous at interior breakpoints, left-continuous at ``b``.
        Raises OutOfRangeError for points outside ``[a, b]`` beyond a
        relative slack of 1e-12.
        """
        x = np.asarray(x, dtype=float)
        slack = 1e-12 * (self.b - self.a)
        if np.any(x < self.a - slack) or np.any(x > self.b + slack) \
                or np.any(~np.isfinite(x)):
            bad = x[(x < self.a - slack) | (x > self.b + slack) | ~np.isfinite(x)]
            raise OutOfRangeError(f"point {bad.ravel()[0]!r} outside "
                                  f"[{self.a}, {self.b}]")
        span = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.clip(span, 0, self.n_spans - 1)


def make_open_uniform_knots(k: int, n_spans: int, a: float, b: float) -> KnotVector:
    if int(k) != k or k < 1:
        raise ArgumentError(f"degree must be an integer >= 1, got {k!r}")
    if int(n_spans) != n_spans or n_spans < 1:
        raise ArgumentError(f"n_spans must be an integer >= 1, got {n_spans!r}")
    if not a < b:
        raise ArgumentError("need a < b")
    k, n_spans = int(k), int(n_spans)
    inner = a + (b - a) * np.arange(1, n_spans) / n_spans
    values = np.concatenate([np.full(k + 1, a), inner, np.full(k + 1, b)])
    return KnotVector(values, k)


def bspline_basis(kv: KnotVector, x, max_deriv: int = 0, span=None):
    """Nonzero B-splines and derivatives at many points.

    Parameters
    ----------
    kv : KnotVector
    x : array_like, shape (npts,)
    max_deriv : int
        Highest derivative order; orders above the degree come back as zeros.
    span : array_like of int, optional
        Force the span used at each point (e.g. the cell a quadrature point
        belongs to). Defaults to ``kv.find_span(x)``.

    Returns
    -------
    first : ndarray of int, shape (npts,)
        Global index of the first of the ``k + 1`` nonzero functions.
    ders : ndarray, shape (npts, max_deriv + 1, k + 1)
        ``ders[:, r, j]`` is the r-th derivative of function ``first + j``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = kv.degree
    U = kv.values
    if span is None:
        span = kv.find_span(x)
    span = np.asarray(span, dtype=np.int64)
    mu = span + p  # index into U with U[mu] <= x < U[mu+1]
    npts = x.size
    nd = min(max_deriv, p)

    ndu = np.zeros((npts, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((npts, p + 1))
    right = np.zeros((npts, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - U[mu + 1 - j]
        right[:, j] = U[mu + j] - x
        saved = np.zeros(npts)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((npts, max_deriv + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    # derivative recursion over the triangular table
    for r in range(p + 1):
        a = np.zeros((2, npts, p + 1))
        a[0, :, 0] = 1.0
        s1, s2 = 0, 1
        for k in range(1, nd + 1):
            d = np.zeros(npts)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, :, 0] = a[s1, :, 0] / ndu[:, pk + 1, rk]
                d += a[s2, :, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, :, j] = (a[s1, :, j] - a[s1, :, j - 1]) / ndu[:, pk + 1, rk + j]
                d += a[s2, :, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[s2, :, k] = -a[s1, :, k - 1] / ndu[:, pk + 1, r]
                d += a[s2, :, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    fac = p
    for k in range(1, nd + 1):
        ders[:, k, :] *= fac
        fac *= p - k
    return span, ders


def eval_bspline_1d(kv: KnotVector, x: float, max_deriv: int = 0):
    """Nonzero B-splines at a single point.

    Returns a list of ``(global_index, value, derivs)`` where ``derivs`` holds
    derivatives of order 1..max_deriv.
    """
    if max_deriv < 0 or max_deriv > kv.degree:
        raise ArgumentError(f"max_deriv must be in [0, {kv.degree}]")
    first, ders = bspline_basis(kv, [x], max_deriv)
    out = []
    for j in range(kv.degree + 1):
        out.append((int(first[0] + j), float(ders[0, 0, j]),
                    tuple(float(v) for v in ders[0, 1:, j])))
    return out


# ----------------------------------------------------------------------------
# foreground (reference triangle) Lagrange shape functions
# ----------------------------------------------------------------------------
REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


def n_local_nodes(kappa: int) -> int:
    return (kappa + 1) * (kappa + 2) // 2


def reference_nodes(kappa: int) -> np.ndarray:
    """Reference coordinates of the local Lagrange nodes."""
    _check_degree(kappa, "foreground")
    if kappa == 1:
        return REFERENCE_VERTICES.copy()
    mids = [0.5 * (REFERENCE_VERTICES[i] + REFERENCE_VERTICES[j]) for i, j in LOCAL_EDGES]
    return np.vstack([REFERENCE_VERTICES, mids])


def _check_degree(deg, which):
    if deg not in SUPPORTED_DEGREES:
        raise CapabilityError(f"unsupported {which} degree {deg!r}; "
                              f"supported: {SUPPORTED_DEGREES}")


def shape_functions(kappa: int, xi):
    """Values, reference gradients and reference Hessians at points ``xi``.

    ``xi`` has shape (npts, 2) in reference coordinates. Returns arrays of
    shape (npts, nloc), (npts, nloc, 2) and (npts, nloc, 2, 2).
    """
    _check_degree(kappa, "foreground")
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    s, t = xi[:, 0], xi[:, 1]
    l0 = 1.0 - s - t
    npts = xi.shape[0]
    nloc = n_local_nodes(kappa)
    N = np.empty((npts, nloc))
    dN = np.empty((npts, nloc, 2))
    d2N = np.zeros((npts, nloc, 2, 2))
    if kappa == 1:
        N[:, 0], N[:, 1], N[:, 2] = l0, s, t
        dN[:, 0] = (-1.0, -1.0)
        dN[:, 1] = (1.0, 0.0)
        dN[:, 2] = (0.0, 1.0)
        return N, dN, d2N
    N[:, 0] = l0 * (2 * l0 - 1)
    N[:, 1] = s * (2 * s - 1)
    N[:, 2] = t * (2 * t - 1)
    N[:, 3] = 4 * l0 * s
    N[:, 4] = 4 * s * t
    N[:, 5] = 4 * t * l0
    g0 = -(4 * l0 - 1)
    dN[:, 0, 0] = g0
    dN[:, 0, 1] = g0
    dN[:, 1, 0] = 4 * s - 1
    dN[:, 1, 1] = 0.0
    dN[:, 2, 0] = 0.0
    dN[:, 2, 1] = 4 * t - 1
    dN[:, 3, 0] = 4 * (l0 - s)
    dN[:, 3, 1] = -4 * s
    dN[:, 4, 0] = 4 * t
    dN[:, 4, 1] = 4 * s
    dN[:, 5, 0] = -4 * t
    dN[:, 5, 1] = 4 * (l0 - t)
    d2N[:] = np.array([
        [[4, 4], [4, 4]],
        [[4, 0], [0, 0]],
        [[0, 0], [0, 4]],
        [[-8, -4], [-4, 0]],
        [[0, 4], [4, 0]],
        [[0, -4], [-4, -8]],
    ], dtype=float)
    return N, dN, d2N


@dataclass(frozen=True, eq=False)
class ForegroundShape:
    degree: int
    node_coords: np.ndarray  # barycentric, (nloc, 3)
    values: np.ndarray
    gradients: np.ndarray
    hessians: np.ndarray | None


def eval_foreground_shape(kappa: int, bary: Sequence[float], max_deriv: int = 1) -> ForegroundShape:
    """Evaluate all foreground shape functions at one barycentric point."""
    _check_degree(kappa, "foreground")
    lam = np.asarray(bary, dtype=float)
    if lam.shape != (3,) or np.any(lam < -1e-14) or abs(lam.sum() - 1.0) > 1e-12:
        raise ArgumentError("barycentric coordinates must be nonnegative and sum to 1")
    N, dN, d2N = shape_functions(kappa, lam[1:][None, :])
    ref = reference_nodes(kappa)
    nodes_bary = np.column_stack([1.0 - ref.sum(axis=1), ref])
    return ForegroundShape(kappa, nodes_bary, N[0], dN[0] if max_deriv >= 1 else None,
                           d2N[0] if max_deriv >= 2 else None)


# ----------------------------------------------------------------------------
# background spaces
# ----------------------------------------------------------------------------
@dataclass(frozen=True)
class BackgroundGrid:
    """Uniform structured grid of square cells."""

    origin: tuple[float, float]
    h: float
    cells: tuple[int, int]

    def __post_init__(self):
        if self.h <= 0 or min(self.cells) < 1:
            raise ArgumentError("grid needs h > 0 and at least one cell per axis")

    @classmethod
    def from_bounds(cls, bounds, h):
        """Grid over ``(xmin, xmax, ymin, ymax)`` with spacing ``h``."""
        xmin, xmax, ymin, ymax = map(float, bounds)
        nx = (xmax - xmin) / h
        ny = (ymax - ymin) / h
        if abs(nx - round(nx)) > 1e-9 or abs(ny - round(ny)) > 1e-9:
            raise ArgumentError(f"bounds {bounds} are not a multiple of h={h}")
        return cls((xmin, ymin), float(h), (int(round(nx)), int(round(ny))))

    @property
    def bounds(self):
        x0, y0 = self.origin
        return (x0, x0 + self.cells[0] * self.h, y0, y0 + self.cells[1] * self.h)

    @property
    def n_cells(self) -> int:
        return self.cells[0] * self.cells[1]

    def vertex_coords(self) -> np.ndarray:
        nx, ny = self.cells
        x0, y0 = self.origin
        X, Y = np.meshgrid(x0 + self.h * np.arange(nx + 1), y0 + self.h * np.arange(ny + 1))
        return np.column_stack([X.ravel(), Y.ravel()])

    def contains(self, pts, tol=1e-12):
        pts = np.atleast_2d(pts)
        xmin, xmax, ymin, ymax = self.bounds
        s = tol * self.h
        return ((pts[:, 0] >= xmin - s) & (pts[:, 0] <= xmax + s)
                & (pts[:, 1] >= ymin - s) & (pts[:, 1] <= ymax + s))

    def locate(self, pts):
        """Cell indices (ci, cj) of points, right-continuous inside the grid."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        inside = self.contains(pts)
        if not np.all(inside):
            bad = pts[~inside][0]
            raise OutOfRangeError(f"point ({bad[0]!r}, {bad[1]!r}) outside grid {self.bounds}")
        x0, y0 = self.origin
        nx, ny = self.cells
        # breakpoint search keeps the knot-span convention of KnotVector
        bx = x0 + self.h * np.arange(nx + 1)
        by = y0 + self.h * np.arange(ny + 1)
        ci = np.clip(np.searchsorted(bx, pts[:, 0], side="right") - 1, 0, nx - 1)
        cj = np.clip(np.searchsorted(by, pts[:, 1], side="right") - 1, 0, ny - 1)
        return ci, cj


class BasisEval(NamedTuple):
    """Batched sparse basis evaluation: ``nloc`` nonzero functions per point."""

    indices: np.ndarray  # (npts, nloc) int
    values: np.ndarray  # (npts, nloc)
    grads: np.ndarray | None  # (npts, nloc, 2)
    hessians: np.ndarray | None  # (npts, nloc, 2, 2)


class BackgroundSpace:
    kind: str
    degree: int
    grid: BackgroundGrid

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def n_dofs(self) -> int:
        raise NotImplementedError

    def evaluate(self, pts, max_deriv=0, locate_at=None) -> BasisEval:
        raise NotImplementedError

    def interpolate_function(self, fn) -> np.ndarray:
        """Background coefficients reproducing ``fn(x, y)`` (exact for the
        polynomials the space contains)."""
        raise NotImplementedError


def _snap_to_breakpoints(x, kv: KnotVector, tol: float = 1e-12):
    """Move coordinates within ``tol`` (relative to the knot spacing) of a
    breakpoint exactly onto it, so functions vanishing there are exactly 0."""
    bp = np.unique(kv.values)
    x = np.array(x, dtype=float)
    j = np.clip(np.searchsorted(bp, x), 1, len(bp) - 1)
    for cand in (bp[j - 1], bp[j]):
        near = np.abs(x - cand) <= tol * (bp[-1] - bp[0]) / (len(bp) - 1)
        x[near] = cand[near]
    return x


class TensorBSplineSpace(BackgroundSpace):
    kind = "tensor-bspline"

    def __init__(self, grid: BackgroundGrid, degree: int):
        _check_degree(degree, "background")
        self.grid = grid
        self.degree = int(degree)
        xmin, xmax, ymin, ymax = grid.bounds
        self.knots = (make_open_uniform_knots(degree, grid.cells[0], xmin, xmax),
                      make_open_uniform_knots(degree, grid.cells[1], ymin, ymax))

    def __repr__(self):
        return f"TensorBSplineSpace(k={self.degree}, cells={self.grid.cells}, h={self.h})"

    @property
    def n_funcs_1d(self):
        return self.knots[0].n_funcs, self.knots[1].n_funcs

    @property
    def n_dofs(self) -> int:
        nfx, nfy = self.n_funcs_1d
        return nfx * nfy

    def evaluate(self, pts, max_deriv=0, locate_at=None) -> BasisEval:
        """Evaluate the ``(k+1)^2`` nonzero functions at each point.

        ``locate_at`` gives, per point, a point whose cell fixes the
        polynomial piece (used to evaluate on cell boundaries from a chosen
        side).
        """
        if max_deriv not in (0, 1, 2):
            raise ArgumentError("max_deriv must be 0, 1 or 2")
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        k = self.degree
        kx, ky = self.knots
        if locate_at is None:
            ci, cj = self.grid.locate(pts)
        else:
            self.grid.locate(pts)
            ci, cj = self.grid.locate(locate_at)
        px = _snap_to_breakpoints(pts[:, 0], kx)
        py = _snap_to_breakpoints(pts[:, 1], ky)
        fx, Bx = bspline_basis(kx, px, max_deriv, span=ci)
        fy, By = bspline_basis(ky, py, max_deriv, span=cj)
        nfx = kx.n_funcs
        ix = fx[:, None] + np.arange(k + 1)
        iy = fy[:, None] + np.arange(k + 1)
        # local ordering: x fastest, matching the global layout
        idx = (iy[:, :, None] * nfx + ix[:, None, :]).reshape(len(pts), -1)
        vals = (By[:, 0, :, None] * Bx[:, 0, None, :]).reshape(len(pts), -1)
        grads = hess = None
        if max_deriv >= 1:
            gx = By[:, 0, :, None] * Bx[:, 1, None, :]
            gy = By[:, 1, :, None] * Bx[:, 0, None, :]
            grads = np.stack([gx, gy], axis=-1).reshape(len(pts), -1, 2)
        if max_deriv >= 2:
            hxx = By[:, 0, :, None] * Bx[:, 2, None, :]
            hxy = By[:, 1, :, None] * Bx[:, 1, None, :]
            hyy = By[:, 2, :, None] * Bx[:, 0, None, :]
            hess = np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)
            hess = hess.reshape(len(pts), -1, 2, 2)
        return BasisEval(idx, vals, grads, hess)

    def interpolate_function(self, fn) -> np.ndarray:
        gx, gy = (kv.greville() for kv in self.knots)
        Cx = _collocation(self.knots[0], gx)
        Cy = _collocation(self.knots[1], gy)
        X, Y = np.meshgrid(gx, gy)
        F = np.asarray(fn(X, Y), dtype=float) * np.ones_like(X)
        D = np.linalg.solve(Cy, np.linalg.solve(Cx, F.T).T)
        return D.ravel()

    def support(self, j):
        """Axis-aligned box ``(xmin, xmax, ymin, ymax)`` of ``supp N_j``."""
        nfx = self.knots[0].n_funcs
        jx, jy = j % nfx, j // nfx
        k = self.degree
        ux, uy = self.knots[0].values, self.knots[1].values
        return (ux[jx], ux[jx + k + 1], uy[jy], uy[jy + k + 1])


def _collocation(kv, pts):
    first, ders = bspline_basis(kv, pts, 0)
    C = np.zeros((pts.size, kv.n_funcs))
    for j in range(kv.degree + 1):
        C[np.arange(pts.size), first + j] = ders[:, 0, j]
    return C


_SNAP_TOL = 1e-12


def _snap_barycentric(xi):
    """Snap reference coordinates lying within roundoff of an edge onto it.

    Points on element edges (common for foreground nodes) otherwise pick up
    ~1e-14 values for functions that vanish there, which keeps spurious
    near-empty columns alive in the extraction operator.
    """
    xi = np.array(xi, dtype=float)
    xi[np.abs(xi) < _SNAP_TOL] = 0.0
    xi[np.abs(xi - 1.0) < _SNAP_TOL] = 1.0
    on_hyp = np.abs(1.0 - xi[:, 0] - xi[:, 1]) < _SNAP_TOL
    xi[on_hyp, 1] = 1.0 - xi[on_hyp, 0]
    return xi


class LagrangeSpace(BackgroundSpace):
    """C0 Lagrange space on the diagonal-split structured triangulation."""

    kind = "simplicial-lagrange"

    # lattice offsets (in units of h/k) of the local nodes for lower/upper triangles
    _TRI_VERTS = (np.array([[0, 0], [1, 0], [1, 1]]), np.array([[0, 0], [1, 1], [0, 1]]))

    def __init__(self, grid: BackgroundGrid, degree: int):
        _check_degree(degree, "background")
        self.grid = grid
        self.degree = int(degree)
        k = self.degree
        self._offsets = []
        for verts in self._TRI_VERTS:
            loc = [k * v for v in verts]
            if k == 2:
                loc += [verts[i] + verts[j] for i, j in LOCAL_EDGES]
            self._offsets.append(np.array(loc))

    def __repr__(self):
        return f"LagrangeSpace(k={self.degree}, cells={self.grid.cells}, h={self.h})"

    @property
    def lattice_shape(self):
        k = self.degree
        return k * self.grid.cells[0] + 1, k * self.grid.cells[1] + 1

    @property
    def n_dofs(self) -> int:
        nx, ny = self.lattice_shape
        return nx * ny

    def node_coords(self) -> np.ndarray:
        nx, ny = self.lattice_shape
        x0, y0 = self.grid.origin
        step = self.h / self.degree
        X, Y = np.meshgrid(x0 + step * np.arange(nx), y0 + step * np.arange(ny))
        return np.column_stack([X.ravel(), Y.ravel()])

    def element_of(self, pts):
        """Cell indices and triangle flag (0 lower, 1 upper) of points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        ci, cj = self.grid.locate(pts)
        x0, y0 = self.grid.origin
        s = (pts[:, 0] - x0) / self.h - ci
        t = (pts[:, 1] - y0) / self.h - cj
        upper = (t > s).astype(np.int64)
        return ci, cj, upper

    def evaluate(self, pts, max_deriv=0, locate_at=None) -> BasisEval:
        if max_deriv not in (0, 1, 2):
            raise ArgumentError("max_deriv must be 0, 1 or 2")
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if locate_at is None:
            ci, cj, upper = self.element_of(pts)
        else:
            self.grid.locate(pts)
            ci, cj, upper = self.element_of(locate_at)
        k, h = self.degree, self.h
        x0, y0 = self.grid.origin
        npts = len(pts)
        nlx = self.lattice_shape[0]
        offsets = np.stack(self._offsets)[upper]  # (npts, nloc, 2)
        base = np.column_stack([k * ci, k * cj])
        lat = base[:, None, :] + offsets
        idx = lat[:, :, 1] * nlx + lat[:, :, 0]
        # affine map from reference triangle: x = x_v0 + J xi
        v = np.stack(self._TRI_VERTS)[upper] * h  # (npts, 3, 2) relative to cell corner
        J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
        Jinv = np.linalg.inv(J)
        corner = np.column_stack([x0 + ci * h, y0 + cj * h])
        xi = np.einsum("pij,pj->pi", Jinv, pts - corner - v[:, 0])
        xi = _snap_barycentric(np.clip(xi, -1e-12, 1.0 + 1e-12))
        N, dN, d2N = shape_functions(k, xi)
        grads = hess = None
        if max_deriv >= 1:
            grads = np.einsum("pba,plb->pla", Jinv, dN)
        if max_deriv >= 2:
            hess = np.einsum("pba,plbd,pdc->plac", Jinv, d2N, Jinv)
        return BasisEval(idx, N, grads, hess)

    def interpolate_function(self, fn) -> np.ndarray:
        X = self.node_coords()
        return np.asarray(fn(X[:, 0], X[:, 1]), dtype=float) * np.ones(len(X))


def make_background_space(kind: str, grid: BackgroundGrid, degree: int) -> BackgroundSpace:
    if kind == "tensor-bspline":
        return TensorBSplineSpace(grid, degree)
    if kind == "simplicial-lagrange":
        return LagrangeSpace(grid, degree)
    raise CapabilityError(f"unknown background kind {kind!r}")


def eval_background_basis(space: BackgroundSpace, p, max_deriv: int = 0):
    """Sparse basis evaluation at a single point.

    Returns a list of ``(global_index, value, grad, hessian)`` tuples; ``grad``
    and ``hessian`` are ``None`` when not requested.
    """
    p = np.asarray(p, dtype=float).reshape(1, 2)
    try:
        ev = space.evaluate(p, max_deriv)
    except OutOfRangeError:
        raise
    except (ValueError, IndexError) as exc:  # pragma: no cover - defensive
        raise GeometryError(f"point location failed at {p[0]}: {exc}") from exc
    out = []
    for l in range(ev.indices.shape[1]):
        g = None if ev.grads is None else ev.grads[0, l].copy()
        H = None if ev.hessians is None else ev.hessians[0, l].copy()
        out.append((int(ev.indices[0, l]), float(ev.values[0, l]), g, H))
    return out
