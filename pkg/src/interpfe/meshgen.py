"""Foreground simplicial meshes.

Background-fitted meshes come from splitting every background cell into
triangles and clipping each triangle against the domain with vertex
classification; background-unfitted meshes are structured triangulations
built in the domain's own frame. Both can be locally red-green refined
near a boundary piece and filtered for slivers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .domains import DomainShape, RotatedSquare
from .errors import ArgumentError, CapabilityError, GeometryError
from .spaces import BackgroundGrid, LOCAL_EDGES

UNFITTED = -1
DEFAULT_SLIVER_TOL = 1e-5


@dataclass(eq=False)
class ForegroundMesh:
    """Triangle mesh with marked boundary facets.

    Facet ``f`` is local edge ``facet_edge[f]`` (vertices ``l`` and ``l+1``)
    of triangle ``facet_tri[f]``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    facet_tri: np.ndarray
    facet_edge: np.ndarray
    facet_marker: np.ndarray
    facet_normal: np.ndarray
    parent_cell: np.ndarray
    domain: DomainShape | None = None
    info: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self._cache = {}

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_facets(self) -> int:
        return len(self.facet_tri)

    @property
    def fitted(self) -> bool:
        return self.n_triangles > 0 and bool(np.all(self.parent_cell >= 0))

    def signed_areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    @property
    def eta(self) -> float:
        """Characteristic size: square root of the median element area."""
        if self.n_triangles == 0:
            return 0.0
        return math.sqrt(float(np.median(np.abs(self.signed_areas()))))

    def facet_vertices(self) -> np.ndarray:
        """(nf, 2) vertex ids of each facet, in the triangle's orientation."""
        t = self.triangles[self.facet_tri]
        a = t[np.arange(self.n_facets), self.facet_edge]
        b = t[np.arange(self.n_facets), (self.facet_edge + 1) % 3]
        return np.column_stack([a, b])

    def facets_with(self, markers) -> np.ndarray:
        return np.flatnonzero(np.isin(self.facet_marker, list(markers)))

    def lagrange_nodes(self, kappa: int):
        """Global Lagrange nodes of degree ``kappa``.

        Returns ``(coords, dofmap)`` with dofmap of shape (nt, nloc): vertices
        first, then one node per global edge (P2), local order v0 v1 v2 e01
        e12 e20. Coincident vertices (within 1e-10 eta) share a node.
        """
        key = ("nodes", kappa)
        if key in self._cache:
            return self._cache[key]
        if kappa not in (1, 2):
            raise CapabilityError(f"unsupported foreground degree {kappa!r}")
        vid = _merge_coincident(self.vertices, 1e-10 * max(self.eta, 1e-300))
        tris = vid[self.triangles]
        used, inv = np.unique(tris, return_inverse=True)
        tris = inv.reshape(tris.shape)
        coords = self.vertices[used]  # merged ids are representative vertex indices
        if kappa == 1:
            out = (coords, tris.copy())
        else:
            edges, emap = _edge_numbering(tris)
            mids = 0.5 * (coords[edges[:, 0]] + coords[edges[:, 1]])
            out = (np.vstack([coords, mids]), np.hstack([tris, len(coords) + emap]))
        self._cache[key] = out
        return out

    def with_triangles(self, keep: np.ndarray, info=None) -> "ForegroundMesh":
        """Submesh of the kept triangles; facets of dropped ones are dropped too."""
        keep = np.asarray(keep, dtype=bool)
        new_id = np.cumsum(keep) - 1
        fkeep = keep[self.facet_tri]
        tris = self.triangles[keep]
        used, inv = np.unique(tris, return_inverse=True)
        return ForegroundMesh(
            vertices=self.vertices[used],
            triangles=inv.reshape(tris.shape),
            facet_tri=new_id[self.facet_tri[fkeep]],
            facet_edge=self.facet_edge[fkeep],
            facet_marker=self.facet_marker[fkeep],
            facet_normal=self.facet_normal[fkeep],
            parent_cell=self.parent_cell[keep],
            domain=self.domain,
            info={**self.info, **(info or {})},
        )


def _signed_areas(V, T):
    a, b, c = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _merge_coincident(V, tol):
    """Map each vertex to the lowest-index vertex within ``tol`` of it."""
    if len(V) == 0:
        return np.zeros(0, dtype=np.int64)
    keys = np.round(V / tol).astype(np.int64)
    _, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    return first[inv.ravel()]


def _edge_numbering(tris):
    """Unique edges (sorted vertex pairs) and per-triangle local edge ids."""
    loc = np.array(LOCAL_EDGES)
    e = np.sort(tris[:, loc], axis=2).reshape(-1, 2)
    edges, inv = np.unique(e, axis=0, return_inverse=True)
    return edges, inv.reshape(len(tris), 3)


def _boundary_facets(tris):
    """(triangle, local edge) of every edge owned by exactly one triangle."""
    loc = np.array(LOCAL_EDGES)
    e = np.sort(tris[:, loc], axis=2).reshape(-1, 2)
    _, inv, counts = np.unique(e, axis=0, return_inverse=True, return_counts=True)
    single = np.flatnonzero(counts[inv.ravel()] == 1)
    return single // 3, single % 3


def _facet_normals(V, T, ftri, fedge):
    a = V[T[ftri, fedge]]
    b = V[T[ftri, (fedge + 1) % 3]]
    d = b - a
    n = np.column_stack([d[:, 1], -d[:, 0]])
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def build_mesh(vertices, triangles, parent_cell=None, domain=None, markers=None,
               edge_markers=None, info=None) -> ForegroundMesh:
    """Assemble a ForegroundMesh, deriving boundary facets from connectivity.

    Facet markers come from ``edge_markers`` (dict keyed by sorted vertex
    pair), else from ``domain.classify_facets`` on facet midpoints, else
    all 1.
    """
    V = np.asarray(vertices, dtype=float).reshape(-1, 2)
    T = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if parent_cell is None:
        parent_cell = np.full(len(T), UNFITTED, dtype=np.int64)
    ftri, fedge = _boundary_facets(T)
    a = T[ftri, fedge]
    b = T[ftri, (fedge + 1) % 3]
    if edge_markers is not None:
        fm = np.array([edge_markers.get((min(i, j), max(i, j)), 0) for i, j in zip(a, b)],
                      dtype=np.int64)
    elif markers is not None:
        fm = np.asarray(markers, dtype=np.int64)
    elif domain is not None:
        fm = domain.classify_facets(0.5 * (V[a] + V[b]))
    else:
        fm = np.ones(len(ftri), dtype=np.int64)
    return ForegroundMesh(V, T, ftri.astype(np.int64), fedge.astype(np.int64), fm,
                          _facet_normals(V, T, ftri, fedge), np.asarray(parent_cell, dtype=np.int64),
                          domain, dict(info or {}))


# ----------------------------------------------------------------------------
# background-fitted generation
# ----------------------------------------------------------------------------
def _cell_triangles(grid: BackgroundGrid, split: str):
    """Vertex coordinates, triangles and parent cells of the split grid."""
    nx, ny = grid.cells
    V = grid.vertex_coords()
    ci, cj = np.meshgrid(np.arange(nx), np.arange(ny))
    ci, cj = ci.ravel(), cj.ravel()
    cell = ci + nx * cj
    v00 = ci + (nx + 1) * cj
    v10, v01, v11 = v00 + 1, v00 + nx + 1, v00 + nx + 2
    if split == "two":
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
        T = np.stack([lower, upper], axis=1).reshape(-1, 3)
        P = np.repeat(cell, 2)
    elif split == "four":
        centers = len(V) + cell
        x0, y0 = grid.origin
        C = np.column_stack([x0 + (ci + 0.5) * grid.h, y0 + (cj + 0.5) * grid.h])
        V = np.vstack([V, C])
        T = np.stack([np.column_stack([v00, v10, centers]), np.column_stack([v10, v11, centers]),
                      np.column_stack([v11, v01, centers]), np.column_stack([v01, v00, centers])],
                     axis=1).reshape(-1, 3)
        P = np.repeat(cell, 4)
    else:
        raise CapabilityError(f"unknown cell split {split!r}")
    return V, T, P


def _fmt_box(b):
    return "[" + ", ".join(f"{float(v):.6g}" for v in b) + "]"


def generate_fitted_foreground(grid: BackgroundGrid, domain: DomainShape,
                               cell_split: str = "two") -> ForegroundMesh:
    """Background-fitted foreground mesh by cutting the split background grid.

    Vertices with ``|signed distance| <= 1e-12 h`` count as inside. Each
    triangle is clipped to its inside part: the inside vertices plus the
    boundary crossings of edges joining a strictly-inside vertex to an
    outside one. Three points give one triangle, four give two (shorter
    diagonal).
    """
    bx = domain.bbox()
    gx = grid.bounds
    slack = 1e-12 * grid.h
    if (bx[0] < gx[0] - slack or bx[1] > gx[1] + slack or bx[2] < gx[2] - slack
            or bx[3] > gx[3] + slack) and domain.kind != "half-plane":
        raise GeometryError(f"grid {_fmt_box(gx)} does not cover domain bounding box {_fmt_box(bx)}")

    V, T, P = _cell_triangles(grid, cell_split)
    tol = 1e-12 * grid.h
    sd = domain.signed_distance(V)
    inside = sd <= tol
    strict = sd < -tol
    n_in = inside[T].sum(axis=1)
    all_on = (n_in == 3) & ~strict[T].any(axis=1)
    if np.any(all_on):
        cen = V[T[all_on]].mean(axis=1)
        ambiguous = domain.signed_distance(cen) >= -tol
        if np.any(ambiguous):
            bad = P[np.flatnonzero(all_on)[np.flatnonzero(ambiguous)[0]]]
            raise GeometryError(f"degenerate cut in background cell {int(bad)}: "
                                "all triangle vertices lie on the boundary")
    keep = T[n_in == 3]
    keep_parent = P[n_in == 3]
    cut = np.flatnonzero((n_in == 1) | (n_in == 2))

    new_pts: list[np.ndarray] = []
    crossing: dict[tuple[int, int], int] = {}
    nV = len(V)

    def crossing_vertex(i, j):
        key = (i, j) if i < j else (j, i)
        vid = crossing.get(key)
        if vid is None:
            vid = nV + len(new_pts)
            new_pts.append(domain.intersect(V[i], V[j]))
            crossing[key] = vid
        return vid

    extra_tris, extra_parent = [], []
    for t in cut:
        tri = T[t]
        poly = []
        for l in range(3):
            i, j = tri[l], tri[(l + 1) % 3]
            if inside[i]:
                poly.append(i)
            if strict[i] and not inside[j]:
                poly.append(crossing_vertex(i, j))
            elif strict[j] and not inside[i]:
                poly.append(crossing_vertex(j, i))
        if len(poly) == 3:
            extra_tris.append(poly)
            extra_parent.append(P[t])
        elif len(poly) == 4:
            pts = np.vstack([V[v] if v < nV else new_pts[v - nV] for v in poly])
            if np.sum((pts[0] - pts[2]) ** 2) <= np.sum((pts[1] - pts[3]) ** 2):
                extra_tris += [[poly[0], poly[1], poly[2]], [poly[0], poly[2], poly[3]]]
            else:
                extra_tris += [[poly[0], poly[1], poly[3]], [poly[1], poly[2], poly[3]]]
            extra_parent += [P[t], P[t]]

    allV = np.vstack([V] + ([np.vstack(new_pts)] if new_pts else []))
    allT = np.vstack([keep] + ([np.array(extra_tris, dtype=np.int64)] if extra_tris else []))
    allP = np.concatenate([keep_parent, np.array(extra_parent, dtype=np.int64)])
    if len(allT) == 0:  # domain misses the grid; callers decide whether that is an error
        return ForegroundMesh(np.zeros((0, 2)), np.zeros((0, 3), dtype=np.int64),
                              *(np.zeros(0, dtype=np.int64) for _ in range(3)),
                              np.zeros((0, 2)), np.zeros(0, dtype=np.int64), domain,
                              {"generator": "fitted", "h": grid.h, "cell_split": cell_split})
    area = _signed_areas(allV, allT)
    ok = area > 1e-15 * grid.h ** 2
    allT, allP = allT[ok], allP[ok]
    order = np.lexsort((np.arange(len(allT)), allP))  # group by parent cell
    allT, allP = allT[order], allP[order]
    used, inv = np.unique(allT, return_inverse=True)
    mesh = build_mesh(allV[used], inv.reshape(allT.shape), allP, domain,
                      info={"generator": "fitted", "h": grid.h, "cell_split": cell_split})
    return mesh


# ----------------------------------------------------------------------------
# background-unfitted generation
# ----------------------------------------------------------------------------
def generate_unfitted_foreground(domain: DomainShape, target_eta: float) -> ForegroundMesh:
    """Structured triangulation of a (rotated) square in its own frame.

    The square is split into ``n x n`` cells of side ``<= target_eta``, each
    cut along its local lower-left/upper-right diagonal.
    """
    if not target_eta > 0:
        raise ArgumentError("target_eta must be positive")
    if not isinstance(domain, RotatedSquare):
        raise CapabilityError(f"unfitted generation supports polygonal squares only, "
                              f"not {domain.kind!r}")
    n = max(1, math.ceil(domain.side / target_eta - 1e-9))
    a = domain.half_width
    u = -a + domain.side * np.arange(n + 1) / n
    U, W = np.meshgrid(u, u)
    V = domain.local_to_global(np.column_stack([U.ravel(), W.ravel()]))
    ci, cj = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (ci + (n + 1) * cj).ravel()
    v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
    T = np.stack([np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])],
                 axis=1).reshape(-1, 3)
    return build_mesh(V, T, None, domain, info={"generator": "unfitted", "cells": n})


# ----------------------------------------------------------------------------
# red-green refinement near a boundary piece
# ----------------------------------------------------------------------------
def _edge_marker_dict(mesh):
    fv = mesh.facet_vertices()
    return {(min(a, b), max(a, b)): int(m) for (a, b), m in zip(fv, mesh.facet_marker)}


def refine_near_boundary(mesh: ForegroundMesh, levels: int, marker: int) -> ForegroundMesh:
    """Red-refine triangles owning a facet with ``marker``, ``levels`` times.

    Neighbours with two or more split edges are red-refined too; those with a
    single split edge get a green bisection, so the result is conforming.
    New vertices on curved boundary pieces are projected onto the analytic
    boundary unless that would invert an adjacent triangle.
    """
    if levels < 0:
        raise ArgumentError("levels must be >= 0")
    if marker not in set(int(m) for m in mesh.facet_marker):
        known = sorted(set(int(m) for m in mesh.facet_marker))
        raise ArgumentError(f"unknown boundary marker {marker!r}; mesh has {known}")
    out = mesh
    for _ in range(levels):
        out = _refine_once(out, marker)
    return out


def _refine_once(mesh, marker):
    V, T = mesh.vertices, mesh.triangles
    nt = len(T)
    edges, emap = _edge_numbering(T)
    red = np.zeros(nt, dtype=bool)
    red[mesh.facet_tri[mesh.facet_marker == marker]] = True
    split = np.zeros(len(edges), dtype=bool)
    while True:
        split[emap[red].ravel()] = True
        cnt = split[emap].sum(axis=1)
        grow = ~red & (cnt >= 2)
        if not grow.any():
            break
        red |= grow
    mid_id = np.full(len(edges), -1, dtype=np.int64)
    se = np.flatnonzero(split)
    mid_id[se] = len(V) + np.arange(len(se))
    mids = 0.5 * (V[edges[se, 0]] + V[edges[se, 1]])
    newV = np.vstack([V, mids])

    old_em = _edge_marker_dict(mesh)
    erow = {(int(a), int(b)): r for r, (a, b) in enumerate(edges)}
    new_em = {}
    for (a, b), m in old_em.items():
        row = erow[(a, b)]
        if split[row]:
            c = int(mid_id[row])
            new_em[(min(a, c), max(a, c))] = m
            new_em[(min(c, b), max(c, b))] = m
        else:
            new_em[(a, b)] = m

    tris, parents = [], []
    cnt = split[emap].sum(axis=1)
    for t in range(nt):
        a, b, c = T[t]
        p = mesh.parent_cell[t]
        if red[t]:
            mab, mbc, mca = (int(mid_id[e]) for e in emap[t])
            tris += [[a, mab, mca], [mab, b, mbc], [mca, mbc, c], [mab, mbc, mca]]
            parents += [p] * 4
        elif cnt[t] == 1:
            l = int(np.flatnonzero(split[emap[t]])[0])
            i, j, k = T[t][l], T[t][(l + 1) % 3], T[t][(l + 2) % 3]
            m = int(mid_id[emap[t][l]])
            tris += [[i, m, k], [m, j, k]]
            parents += [p, p]
        else:
            tris.append([a, b, c])
            parents.append(p)
    newT = np.array(tris, dtype=np.int64)

    dom = mesh.domain
    if dom is not None:
        hole_mid = [int(mid_id[e]) for e in se
                    if old_em.get((int(edges[e, 0]), int(edges[e, 1]))) == marker]
        if hole_mid:
            proj = dom.project(newV[hole_mid], marker)
            if proj is not None:
                _project_guarded(newV, newT, np.array(hole_mid), proj)
    info = dict(mesh.info)
    info["refine_levels"] = info.get("refine_levels", 0) + 1
    return build_mesh(newV, newT, np.array(parents, dtype=np.int64), dom,
                      edge_markers=new_em, info=info)


def _project_guarded(V, T, vids, targets):
    """Move ``V[vids]`` to ``targets`` unless an incident triangle would lose
    more than 90% of its area (or invert); such vertices stay put."""
    inc = {int(v): [] for v in vids}
    for t, tri in enumerate(T):
        for v in tri:
            if int(v) in inc:
                inc[int(v)].append(t)
    for v, x in zip(vids, targets):
        ts = np.array(inc[int(v)])
        before = _signed_areas(V, T[ts])
        old = V[v].copy()
        V[v] = x
        after = _signed_areas(V, T[ts])
        if np.any(after <= 0.1 * before):
            V[v] = old


# ----------------------------------------------------------------------------
# sliver filter and quality
# ----------------------------------------------------------------------------
def filter_slivers(mesh: ForegroundMesh, rel_tol: float = DEFAULT_SLIVER_TOL) -> ForegroundMesh:
    """Drop triangles with area below ``rel_tol`` times the largest area.

    Facets of dropped triangles are dropped as well (they are skipped, not
    replaced). The count is stored in ``info["slivers_removed"]``.
    """
    if rel_tol < 0:
        raise ArgumentError("rel_tol must be >= 0")
    if mesh.n_triangles == 0 or rel_tol == 0:
        mesh.info.setdefault("slivers_removed", 0)
        return mesh
    area = np.abs(mesh.signed_areas())
    keep = area >= rel_tol * area.max()
    removed = int((~keep).sum())
    if removed == 0:
        mesh.info["slivers_removed"] = 0
        return mesh
    return mesh.with_triangles(keep, {"slivers_removed": removed})


@dataclass(frozen=True)
class MeshQualityReport:
    n_elements: int
    min_area: float
    max_area: float
    area_ratio: float
    max_aspect_ratio: float
    min_aspect_ratio: float


def aspect_ratios(mesh: ForegroundMesh) -> np.ndarray:
    """(longest edge)^2 / (2 area); equilateral triangles give 2/sqrt(3)."""
    V, T = mesh.vertices, mesh.triangles
    p = V[T]
    e2 = np.stack([np.sum((p[:, (l + 1) % 3] - p[:, l]) ** 2, axis=1) for l in range(3)], axis=1)
    area = np.abs(mesh.signed_areas())
    with np.errstate(divide="ignore"):
        return np.where(area > 0, e2.max(axis=1) / (2.0 * np.where(area > 0, area, 1.0)), np.inf)


def quality_report(mesh: ForegroundMesh) -> MeshQualityReport:
    if mesh.n_triangles == 0:
        raise ArgumentError("quality report needs a nonempty mesh")
    area = np.abs(mesh.signed_areas())
    ar = aspect_ratios(mesh)
    return MeshQualityReport(mesh.n_triangles, float(area.min()), float(area.max()),
                             float(area.min() / area.max()), float(ar.max()), float(ar.min()))
