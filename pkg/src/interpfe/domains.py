"""Analytic domains: signed distance, edge intersection, boundary markers."""
from __future__ import annotations

import math

import numpy as np

from .errors import ArgumentError, CapabilityError

# marker ids
DIRICHLET = 1
X_AXIS, Y_AXIS, OUTER, HOLE = 1, 2, 3, 4


class DomainShape:
    kind: str
    markers: dict[str, int]
    is_polygon: bool = True

    def signed_distance(self, pts) -> np.ndarray:
        raise NotImplementedError

    def inside(self, pts, tol=0.0) -> np.ndarray:
        return self.signed_distance(pts) <= tol

    def intersect(self, p_in, p_out) -> np.ndarray:
        """Boundary crossing on the segment from an inside to an outside point."""
        raise NotImplementedError

    def classify_facets(self, midpoints) -> np.ndarray:
        raise NotImplementedError

    def project(self, pts, marker):
        """Project points onto the boundary piece ``marker``; ``None`` when the
        piece is straight (no projection needed)."""
        return None

    def bbox(self):
        raise NotImplementedError

    def area(self) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class ConvexPolygon(DomainShape):
    """Intersection of half-planes ``n_i . x <= c_i`` (unit normals)."""

    def __init__(self, normals, offsets):
        n = np.asarray(normals, dtype=float).reshape(-1, 2)
        self.normals = n / np.linalg.norm(n, axis=1, keepdims=True)
        self.offsets = np.asarray(offsets, dtype=float).reshape(-1) / np.linalg.norm(n, axis=1)
        self.markers = {"dirichlet": DIRICHLET}

    def _g(self, pts):
        pts = np.atleast_2d(pts)
        return pts @ self.normals.T - self.offsets

    def signed_distance(self, pts):
        # exact near the edges, which is all the classification needs
        return self._g(pts).max(axis=1)

    def intersect(self, p_in, p_out):
        gp = self._g(p_in)[0]
        gq = self._g(p_out)[0]
        crossing = gq > 0
        t = np.min(gp[crossing] / (gp[crossing] - gq[crossing]))
        t = min(max(t, 0.0), 1.0)
        return np.asarray(p_in) + t * (np.asarray(p_out) - np.asarray(p_in))

    def classify_facets(self, midpoints):
        return np.full(len(midpoints), DIRICHLET, dtype=np.int64)


class HalfPlane(ConvexPolygon):
    kind = "half-plane"

    def __init__(self, normal=(1.0, 0.0), offset=0.0):
        super().__init__([normal], [offset])
        self._normal = tuple(float(v) for v in normal)
        self._offset = float(offset)

    def bbox(self):
        return (-math.inf, math.inf, -math.inf, math.inf)

    def area(self):
        return math.inf

    def to_dict(self):
        return {"kind": self.kind, "normal": list(self._normal), "offset": self._offset}


class RotatedSquare(ConvexPolygon):
    """Square ``max(|u|, |v|) <= half_width`` in a frame rotated by ``angle_deg``."""

    kind = "rotated-square"

    def __init__(self, center=(0.0, 0.0), half_width=0.5 / math.sqrt(2.0), angle_deg=45.0):
        if half_width <= 0:
            raise ArgumentError("half_width must be positive")
        self.center = np.asarray(center, dtype=float)
        self.half_width = float(half_width)
        self.angle_deg = float(angle_deg)
        th = math.radians(self.angle_deg)
        c, s = math.cos(th), math.sin(th)
        if self.angle_deg == 45.0:
            c = s = math.sqrt(0.5)
        self.frame = np.array([[c, -s], [s, c]])  # columns: local axes
        e1, e2 = self.frame[:, 0], self.frame[:, 1]
        normals = [e1, -e1, e2, -e2]
        offsets = [n @ self.center + self.half_width for n in normals]
        super().__init__(normals, offsets)

    @property
    def side(self) -> float:
        return 2.0 * self.half_width

    def local_to_global(self, uv):
        return self.center + np.atleast_2d(uv) @ self.frame.T

    def corners(self):
        a = self.half_width
        return self.local_to_global([[-a, -a], [a, -a], [a, a], [-a, a]])

    def bbox(self):
        c = self.corners()
        return (c[:, 0].min(), c[:, 0].max(), c[:, 1].min(), c[:, 1].max())

    def area(self):
        return self.side ** 2

    def to_dict(self):
        return {"kind": self.kind, "center": self.center.tolist(),
                "half_width": self.half_width, "angle_deg": self.angle_deg}


class AxisSquare(RotatedSquare):
    kind = "axis-square"

    def __init__(self, center=(0.5, 0.5), half_width=0.5):
        super().__init__(center, half_width, 0.0)

    def to_dict(self):
        return {"kind": self.kind, "center": self.center.tolist(), "half_width": self.half_width}


class PlateWithHoleQuadrant(DomainShape):
    """Upper-right quadrant ``[0, L]^2`` of a square plate minus a disc of
    radius ``a`` centred at the origin, with ``L = side_factor * a`` (the full
    plate's side is ``side_factor`` hole diameters)."""

    kind = "square-with-hole-quadrant"
    is_polygon = False

    def __init__(self, hole_radius=0.25, side_factor=4.0):
        if hole_radius <= 0 or side_factor <= 2:
            raise ArgumentError("need hole_radius > 0 and side_factor > 2")
        self.radius = float(hole_radius)
        self.side_factor = float(side_factor)
        self.L = self.side_factor * self.radius
        self.markers = {"x_axis": X_AXIS, "y_axis": Y_AXIS, "outer": OUTER, "hole": HOLE}

    def _box(self, pts):
        x, y = pts[:, 0], pts[:, 1]
        return np.maximum.reduce([-x, -y, x - self.L, y - self.L])

    def signed_distance(self, pts):
        pts = np.atleast_2d(pts)
        return np.maximum(self.radius - np.hypot(pts[:, 0], pts[:, 1]), self._box(pts))

    def intersect(self, p_in, p_out):
        p = np.asarray(p_in, dtype=float)
        d = np.asarray(p_out, dtype=float) - p
        ts = []
        # circle: |p + t d|^2 = a^2, the root where the segment enters the disc
        A = d @ d
        B = 2.0 * (p @ d)
        C = p @ p - self.radius ** 2
        disc = B * B - 4 * A * C
        if disc >= 0 and C >= 0:
            sq = math.sqrt(disc)
            # numerically stable smaller root
            q = -0.5 * (B + math.copysign(sq, B))
            roots = [q / A, C / q if q != 0 else math.inf]
            ts += [t for t in roots if -1e-14 <= t <= 1 + 1e-14]
        # box faces
        for g0, g1 in ((-p[0], -(p[0] + d[0])), (-p[1], -(p[1] + d[1])),
                       (p[0] - self.L, p[0] + d[0] - self.L), (p[1] - self.L, p[1] + d[1] - self.L)):
            if g1 > 0 >= g0:
                ts.append(g0 / (g0 - g1))
        t = min(max(min(ts), 0.0), 1.0)
        return p + t * d

    def classify_facets(self, midpoints):
        m = np.atleast_2d(midpoints)
        tol = 1e-9 * self.L
        out = np.full(len(m), HOLE, dtype=np.int64)
        out[np.abs(m[:, 1]) <= tol] = X_AXIS
        out[np.abs(m[:, 0]) <= tol] = Y_AXIS
        out[(np.abs(m[:, 0] - self.L) <= tol) | (np.abs(m[:, 1] - self.L) <= tol)] = OUTER
        return out

    def project(self, pts, marker):
        if marker != HOLE:
            return None
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        return pts * (self.radius / r)[:, None]

    def bbox(self):
        return (0.0, self.L, 0.0, self.L)

    def area(self):
        return self.L ** 2 - 0.25 * math.pi * self.radius ** 2

    def to_dict(self):
        return {"kind": self.kind, "hole_radius": self.radius, "side_factor": self.side_factor}


def make_domain(kind: str, **params) -> DomainShape:
    if kind == "rotated-square":
        return RotatedSquare(**params)
    if kind == "axis-square":
        return AxisSquare(**params)
    if kind == "half-plane":
        return HalfPlane(**params)
    if kind == "square-with-hole-quadrant":
        return PlateWithHoleQuadrant(**params)
    raise CapabilityError(f"unknown domain kind {kind!r}")
