"""Element and facet assembly of Nitsche-type weak forms on the foreground mesh.

All forms produce ``A[i, j] = a(phi_j, phi_i)`` and ``B[i] = L(phi_i)`` in
foreground Lagrange dofs. Element and facet contributions are computed as
batched arrays and reduced into CSR storage in fixed element order, so
repeated runs are bit-identical.

Quadrature exactness is ``2 kappa`` for volume integrals and ``2 kappa + 2``
for facet integrals.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, CapabilityError, ConfigError, PreconditionError
from .meshgen import ForegroundMesh
from .quadrature import gauss_segment, gauss_triangle
from .spaces import LOCAL_EDGES, REFERENCE_VERTICES, BackgroundSpace, shape_functions

VARIANTS = ("nitsche-sym", "nitsche-nonsym")
DEFAULT_C_PEN = {"nitsche-nonsym": 0.0, "nitsche-sym": 10.0}
DEFAULT_BETA = {"biharmonic": 5.0, "elasticity": 10.0}

ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class FormParams:
    """Weak-form constants.

    ``C_pen`` and ``beta`` default per form when left as ``None``: C_pen is 0
    for the non-symmetric and 10 for the symmetric Poisson variant; beta is 5
    for the biharmonic and 10 for the elasticity form.
    """

    variant: str = "nitsche-nonsym"
    C_pen: float | None = None
    alpha: float = 5.0
    beta: float | None = None
    h: float | None = None
    E: float = 200e9
    nu: float = 0.3
    dirichlet_markers: tuple = (1,)
    allow_negative_penalty: bool = False  # only for negative tests

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown Nitsche variant {self.variant!r}; expected one of {VARIANTS}")
        if self.C_pen is None:
            self.C_pen = DEFAULT_C_PEN[self.variant]
        if not self.allow_negative_penalty:
            if self.C_pen < 0:
                raise ConfigError("C_pen must be nonnegative")
            if self.variant == "nitsche-sym" and self.C_pen <= 0:
                raise ConfigError("the symmetric Nitsche variant requires C_pen > 0")
            if self.alpha <= 0 or (self.beta is not None and self.beta <= 0):
                raise ConfigError("alpha and beta must be positive")
        if self.h is not None and self.h <= 0:
            raise ConfigError("h must be positive")
        if self.E <= 0 or not (-1.0 < self.nu < 0.5):
            raise ConfigError("need E > 0 and -1 < nu < 0.5")
        self.dirichlet_markers = tuple(int(m) for m in self.dirichlet_markers)

    @property
    def mu(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lam(self) -> float:
        """Plane-strain first Lamé parameter."""
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    def beta_for(self, form: str) -> float:
        return DEFAULT_BETA[form] if self.beta is None else float(self.beta)

    def require_h(self) -> float:
        if self.h is None:
            raise ArgumentError("penalty length scale h is not set")
        return float(self.h)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dirichlet_markers"] = list(self.dirichlet_markers)
        return d


@dataclass(eq=False)
class AssembledSystem:
    A: sp.csr_matrix
    B: np.ndarray
    symmetric: bool
    meta: dict = field(default_factory=dict)


# --------------------------------------------------------------- geometry

class _Geometry:
    """Affine maps of all triangles plus the foreground dofmap."""

    def __init__(self, mesh: ForegroundMesh, kappa: int):
        if kappa not in (1, 2):
            raise CapabilityError(f"unsupported foreground degree {kappa!r}")
        V, T = mesh.vertices, mesh.triangles
        self.kappa = kappa
        self.x0 = V[T[:, 0]]
        self.J = np.stack([V[T[:, 1]] - self.x0, V[T[:, 2]] - self.x0], axis=-1)
        self.detJ = np.linalg.det(self.J)
        if np.any(self.detJ <= 0):
            raise ArgumentError("foreground triangles must be counterclockwise with positive area")
        self.Jinv = np.linalg.inv(self.J)
        self.nodes, self.dofmap = mesh.lagrange_nodes(kappa)
        self.n_nodes = len(self.nodes)
        self.mesh = mesh

    def volume(self, exactness: int, max_deriv: int = 1):
        """Quadrature data on all elements.

        Returns ``x (nt,nq,2), w (nt,nq), N (nq,nl), G (nt,nq,nl,2), H``
        where H is the physical Hessian ``(nt,nq,nl,2,2)`` or None.
        """
        rule = gauss_triangle(exactness)
        xi = rule.ref
        N, dN, d2N = shape_functions(self.kappa, xi)
        x = self.x0[:, None, :] + np.einsum("tij,qj->tqi", self.J, xi)
        w = self.detJ[:, None] * rule.weights[None, :]
        G = np.einsum("tba,qlb->tqla", self.Jinv, dN)
        H = None
        if max_deriv >= 2:
            H = np.einsum("tba,qlbd,tdc->tqlac", self.Jinv, d2N, self.Jinv)
        return x, w, N, G, H

    def facets(self, fids, exactness: int):
        """Quadrature data on the boundary facets ``fids``.

        Returns ``tri (nf,), x (nf,nq,2), w (nf,nq), n (nf,2), N (nf,nq,nl),
        G (nf,nq,nl,2)``.
        """
        mesh = self.mesh
        fids = np.asarray(fids, dtype=np.int64)
        rule = gauss_segment(exactness)
        s = rule.points
        tri = mesh.facet_tri[fids]
        edge = mesh.facet_edge[fids]
        Ns, dNs = [], []
        for a, b in LOCAL_EDGES:
            xi = REFERENCE_VERTICES[a] + s[:, None] * (REFERENCE_VERTICES[b] - REFERENCE_VERTICES[a])
            N, dN, _ = shape_functions(self.kappa, xi)
            Ns.append(N)
            dNs.append(dN)
        N = np.stack(Ns)[edge]
        dN = np.stack(dNs)[edge]
        fv = mesh.facet_vertices()[fids]
        xa, xb = mesh.vertices[fv[:, 0]], mesh.vertices[fv[:, 1]]
        length = np.linalg.norm(xb - xa, axis=1)
        x = xa[:, None, :] + s[None, :, None] * (xb - xa)[:, None, :]
        w = length[:, None] * rule.weights[None, :]
        G = np.einsum("fba,fqlb->fqla", self.Jinv[tri], dN)
        return tri, x, w, mesh.facet_normal[fids], N, G


def _eval_field(fn, x):
    """Evaluate a scalar callback on points of shape (..., 2)."""
    val = fn(x[..., 0], x[..., 1])
    return np.broadcast_to(np.asarray(val, dtype=float), x.shape[:-1])


def _scatter_matrix(dofs_row, dofs_col, Ae, n_rows, n_cols):
    """Reduce element blocks ``Ae (ne, nr, nc)`` into CSR storage."""
    rows = np.broadcast_to(dofs_row[:, :, None], Ae.shape)
    cols = np.broadcast_to(dofs_col[:, None, :], Ae.shape)
    A = sp.coo_matrix((Ae.ravel(), (rows.ravel(), cols.ravel())), shape=(n_rows, n_cols)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _scatter_vector(dofs, be, n):
    return np.bincount(dofs.ravel(), weights=be.ravel(), minlength=n).astype(float)


def _resolve_h(params: FormParams, h):
    return float(h) if h is not None else params.require_h()


# ---------------------------------------------------------------- Poisson

def _poisson_parts(geo: _Geometry, params: FormParams, h: float):
    """Volume stiffness plus the three boundary matrices on Dirichlet facets.

    Returns ``(K_vol, consistency, adjoint, mass_bdry, fids)`` with element
    blocks already scattered; ``consistency[i, j] = -int (grad phi_j . n) phi_i``,
    ``adjoint[i, j] = int (grad phi_i . n) phi_j`` and ``mass_bdry[i, j] = int
    phi_i phi_j``.
    """
    k = geo.kappa
    nn = geo.n_nodes
    _, w, _, G, _ = geo.volume(2 * k)
    Ke = np.einsum("tq,tqia,tqja->tij", w, G, G)
    Kvol = _scatter_matrix(geo.dofmap, geo.dofmap, Ke, nn, nn)
    fids = geo.mesh.facets_with(params.dirichlet_markers)
    if fids.size == 0:
        raise ArgumentError(f"no boundary facets carry the Dirichlet markers {params.dirichlet_markers}")
    tri, xf, wf, n, Nf, Gf = geo.facets(fids, 2 * k + 2)
    dn = np.einsum("fqla,fa->fql", Gf, n)
    dofs = geo.dofmap[tri]
    cons = _scatter_matrix(dofs, dofs, -np.einsum("fq,fqj,fqi->fij", wf, dn, Nf), nn, nn)
    adj = _scatter_matrix(dofs, dofs, np.einsum("fq,fqi,fqj->fij", wf, dn, Nf), nn, nn)
    mass = _scatter_matrix(dofs, dofs, np.einsum("fq,fqi,fqj->fij", wf, Nf, Nf), nn, nn)
    return Kvol, cons, adj, mass, (tri, xf, wf, Nf, dn)


def assemble_poisson_terms(mesh: ForegroundMesh, kappa: int, params: FormParams, h=None) -> dict:
    """The individual Poisson operator pieces (for diagnostics and tests)."""
    geo = _Geometry(mesh, kappa)
    Kvol, cons, adj, mass, _ = _poisson_parts(geo, params, _resolve_h(params, h))
    return {"volume": Kvol, "consistency": cons, "adjoint": adj, "boundary_mass": mass}


def assemble_poisson(mesh: ForegroundMesh, kappa: int, params: FormParams,
                     f: ScalarField, g: ScalarField, h=None) -> AssembledSystem:
    """Poisson problem with Nitsche-imposed Dirichlet data ``g``.

    ``a(u, v) = (grad u, grad v) - <grad u.n, v> + s <grad v.n, u> + C/h <u, v>``
    with ``s = -1`` for the symmetric and ``s = +1`` for the non-symmetric
    variant; ``L(v) = (f, v) + s <grad v.n, g> + C/h <g, v>``.
    """
    h = _resolve_h(params, h)
    geo = _Geometry(mesh, kappa)
    sgn = -1.0 if params.variant == "nitsche-sym" else 1.0
    cp = float(params.C_pen)
    Kvol, cons, adj, mass, (tri, xf, wf, Nf, dn) = _poisson_parts(geo, params, h)
    A = (Kvol + cons + sgn * adj + (cp / h) * mass).tocsr()
    A.sort_indices()
    x, w, N, _, _ = geo.volume(2 * kappa, max_deriv=0)
    fq = _eval_field(f, x)
    B = _scatter_vector(geo.dofmap, np.einsum("tq,tq,ql->tl", w, fq, N), geo.n_nodes)
    gq = _eval_field(g, xf)
    be = np.einsum("fq,fq,fql->fl", wf, gq, sgn * dn + (cp / h) * Nf)
    B += _scatter_vector(geo.dofmap[tri], be, geo.n_nodes)
    return AssembledSystem(A, B, symmetric=params.variant == "nitsche-sym",
                           meta={"form": "poisson", "variant": params.variant, "C_pen": cp,
                                 "h": h, "kappa": kappa})


# ------------------------------------------------------------- biharmonic

def assemble_biharmonic(mesh: ForegroundMesh, kappa: int, params: FormParams,
                        f: ScalarField, sigma, h=None) -> AssembledSystem:
    """Symmetric Nitsche form for the biharmonic problem, integrated per element.

    ``sigma`` supplies the boundary data ``u = sigma`` and
    ``grad u . n = grad sigma . n``; pass either a pair ``(value, gradient)``
    of callbacks, where ``gradient(x, y)`` returns ``(..., 2)``, or an object
    with ``u`` and ``grad`` callables. Third derivatives of quadratic shape
    functions vanish on affine triangles, so the ``grad(lap v) . n`` terms
    drop out.
    """
    if kappa != 2:
        raise CapabilityError("the biharmonic form needs kappa = 2 (second derivatives of "
                              "linear shape functions vanish)")
    h = _resolve_h(params, h)
    alpha, beta = float(params.alpha), params.beta_for("biharmonic")
    s_val, s_grad = _split_sigma(sigma)
    geo = _Geometry(mesh, kappa)
    nn = geo.n_nodes
    x, w, N, _, H = geo.volume(2 * kappa, max_deriv=2)
    lap = H[..., 0, 0] + H[..., 1, 1]  # (nt, nq, nl)
    Ae = np.einsum("tq,tqi,tqj->tij", w, lap, lap)
    A = _scatter_matrix(geo.dofmap, geo.dofmap, Ae, nn, nn)
    fq = _eval_field(f, x)
    B = _scatter_vector(geo.dofmap, np.einsum("tq,tq,ql->tl", w, fq, N), nn)

    fids = mesh.facets_with(params.dirichlet_markers)
    if fids.size == 0:
        raise ArgumentError(f"no boundary facets carry the Dirichlet markers {params.dirichlet_markers}")
    tri, xf, wf, n, Nf, Gf = geo.facets(fids, 2 * kappa + 2)
    dn = np.einsum("fqla,fa->fql", Gf, n)
    lapf = np.broadcast_to(lap[tri, :1, :], dn.shape)  # constant per element
    Fe = (-np.einsum("fq,fqj,fqi->fij", wf, lapf, dn)
          - np.einsum("fq,fqi,fqj->fij", wf, lapf, dn)
          + (alpha / h ** 3) * np.einsum("fq,fqi,fqj->fij", wf, Nf, Nf)
          + (beta / h) * np.einsum("fq,fqi,fqj->fij", wf, dn, dn))
    dofs = geo.dofmap[tri]
    A = (A + _scatter_matrix(dofs, dofs, Fe, nn, nn)).tocsr()
    A.sort_indices()
    sq = _eval_field(s_val, xf)
    sg = np.asarray(s_grad(xf[..., 0], xf[..., 1]), dtype=float)
    sdn = np.einsum("fqa,fa->fq", np.broadcast_to(sg, xf.shape), n)
    be = np.einsum("fq,fq,fql->fl", wf, sdn, -lapf + (beta / h) * dn) \
        + (alpha / h ** 3) * np.einsum("fq,fq,fql->fl", wf, sq, Nf)
    B += _scatter_vector(dofs, be, nn)
    return AssembledSystem(A, B, symmetric=True,
                           meta={"form": "biharmonic", "alpha": alpha, "beta": beta,
                                 "h": h, "kappa": kappa})


def _split_sigma(sigma):
    if hasattr(sigma, "u") and hasattr(sigma, "grad"):
        return sigma.u, sigma.grad
    try:
        val, grad = sigma
    except (TypeError, ValueError):
        raise ArgumentError("sigma must be a (value, gradient) pair of callables") from None
    return val, grad


# ------------------------------------------------------------- elasticity

TractionField = Callable[[np.ndarray, np.ndarray], np.ndarray]


def assemble_elasticity(mesh: ForegroundMesh, kappa: int, params: FormParams,
                        traction: Mapping[int, TractionField | None],
                        sym_markers=(1, 2), h=None) -> AssembledSystem:
    """Plane-strain elasticity with Nitsche slip conditions on ``sym_markers``.

    Unknowns use block layout ``[u_x at all nodes, u_y at all nodes]``.
    ``traction`` maps each traction marker to ``t(x, n) -> (..., 2)`` (``x``
    and ``n`` of shape (..., 2)) or ``None`` for traction-free pieces.
    Every facet marker of the mesh must be either a symmetry marker or a
    traction marker.
    """
    h = _resolve_h(params, h)
    mu, lam = params.mu, params.lam
    beta = params.beta_for("elasticity")
    sym_markers = tuple(int(m) for m in sym_markers)
    tmarkers = tuple(sorted(int(m) for m in traction))
    present = set(np.unique(mesh.facet_marker).tolist())
    missing = present - set(sym_markers) - set(tmarkers)
    if missing:
        raise ArgumentError(f"boundary markers {sorted(missing)} have neither a symmetry "
                            "condition nor a traction")
    if not set(sym_markers) & present:
        raise ArgumentError(f"none of the symmetry markers {sym_markers} occur on the mesh")
    geo = _Geometry(mesh, kappa)
    nn = geo.n_nodes
    nl = geo.dofmap.shape[1]
    A = _elasticity_volume(geo, mu, lam)

    fids = mesh.facets_with(sym_markers)
    tri, xf, wf, n, Nf, Gf = geo.facets(fids, 2 * kappa + 2)
    gn = np.einsum("fqla,fa->fql", Gf, n)
    # n.sigma(phi_j e_a).n = 2 mu n_a (g_j.n) + lam g_j[a]
    nsn = 2 * mu * n[:, None, None, :] * gn[..., None] + lam * Gf  # (nf,nq,nl,2)
    un = Nf[..., None] * n[:, None, None, :]  # (phi_j e_a).n
    Fe = (-np.einsum("fq,fqja,fqib->fbiaj", wf, un, nsn)
          - np.einsum("fq,fqib,fqja->fbiaj", wf, un, nsn)
          + (beta * mu / h) * np.einsum("fq,fqja,fqib->fbiaj", wf, un, un))
    fd2 = np.hstack([geo.dofmap[tri], geo.dofmap[tri] + nn])
    A = (A + _scatter_matrix(fd2, fd2, Fe.reshape(len(fids), 2 * nl, 2 * nl), 2 * nn, 2 * nn)).tocsr()
    A.sort_indices()

    B = np.zeros(2 * nn)
    for m in tmarkers:
        t_fn = traction[m]
        tf = mesh.facets_with([m])
        if t_fn is None or tf.size == 0:
            continue
        ttri, tx, tw, tnrm, tN, _ = geo.facets(tf, 2 * kappa + 2)
        nb = np.broadcast_to(tnrm[:, None, :], tx.shape)
        tq = np.broadcast_to(np.asarray(t_fn(tx, nb), dtype=float), tx.shape)
        be = np.einsum("fq,fqb,fql->fbl", tw, tq, tN).reshape(len(tf), 2 * nl)
        B += _scatter_vector(np.hstack([geo.dofmap[ttri], geo.dofmap[ttri] + nn]), be, 2 * nn)
    return AssembledSystem(A, B, symmetric=True,
                           meta={"form": "elasticity", "beta": beta, "mu": mu, "lambda": lam,
                                 "h": h, "kappa": kappa, "sym_markers": list(sym_markers),
                                 "traction_markers": list(tmarkers)})


def _elasticity_volume(geo: _Geometry, mu: float, lam: float) -> sp.csr_matrix:
    # K[(b,i),(a,j)] = mu (d_ab gi.gj + gi_a gj_b) + lam gj_a gi_b
    nn = geo.n_nodes
    nl = geo.dofmap.shape[1]
    _, w, _, G, _ = geo.volume(2 * geo.kappa)
    gg = np.einsum("tq,tqia,tqja->tij", w, G, G)
    cross = np.einsum("tq,tqia,tqjb->tiajb", w, G, G)  # gi_a gj_b
    Ke = np.empty((len(w), 2, nl, 2, nl))
    for b in range(2):
        for a in range(2):
            Ke[:, b, :, a, :] = mu * ((a == b) * gg + cross[:, :, a, :, b]) \
                + lam * cross[:, :, b, :, a]
    dofs2 = np.hstack([geo.dofmap, geo.dofmap + nn])
    return _scatter_matrix(dofs2, dofs2, Ke.reshape(len(w), 2 * nl, 2 * nl), 2 * nn, 2 * nn)


def assemble_elasticity_volume(mesh: ForegroundMesh, kappa: int, params: FormParams) -> sp.csr_matrix:
    """Volume stiffness only (no boundary terms)."""
    return _elasticity_volume(_Geometry(mesh, kappa), params.mu, params.lam)


# --------------------------------------------- quadrature-based reference

def assemble_quadrature_reference_poisson(space: BackgroundSpace, mesh: ForegroundMesh,
                                          params: FormParams, f: ScalarField, g: ScalarField,
                                          h=None, include_boundary: bool = True):
    """The Poisson Nitsche form assembled directly in background dofs.

    Background functions and gradients are evaluated at quadrature points of
    the foreground elements (each element lies in one background cell, whose
    polynomial piece is selected via the element centroid). Returns
    ``(K_ref, F_ref)`` in the full background numbering.
    """
    if not mesh.fitted:
        raise PreconditionError("the quadrature-based reference needs a background-fitted "
                                "foreground mesh")
    h = space.h if (h is None and params.h is None) else _resolve_h(params, h)
    sgn = -1.0 if params.variant == "nitsche-sym" else 1.0
    cp = float(params.C_pen)
    n = space.n_dofs
    k = space.degree
    e_vol = min(8, 4 * k)
    e_bnd = 4 * k + 2
    V, T = mesh.vertices, mesh.triangles
    x0 = V[T[:, 0]]
    J = np.stack([V[T[:, 1]] - x0, V[T[:, 2]] - x0], axis=-1)
    detJ = np.linalg.det(J)
    cen = V[T].mean(axis=1)

    rule = gauss_triangle(e_vol)
    nq = len(rule)
    xq = (x0[:, None, :] + np.einsum("tij,qj->tqi", J, rule.ref)).reshape(-1, 2)
    ev = space.evaluate(xq, 1, locate_at=np.repeat(cen, nq, axis=0))
    nb = ev.indices.shape[1]
    idx = ev.indices.reshape(-1, nq, nb)[:, 0, :]  # one cell per element
    Nv = ev.values.reshape(-1, nq, nb)
    Gv = ev.grads.reshape(-1, nq, nb, 2)
    w = detJ[:, None] * rule.weights[None, :]
    K = _scatter_matrix(idx, idx, np.einsum("tq,tqia,tqja->tij", w, Gv, Gv), n, n)
    F = _scatter_vector(idx, np.einsum("tq,tq,tqi->ti", w, _eval_field(f, xq.reshape(-1, nq, 2)), Nv), n)
    if include_boundary:
        fids = mesh.facets_with(params.dirichlet_markers)
        srule = gauss_segment(e_bnd)
        ns = len(srule)
        fv = mesh.facet_vertices()[fids]
        xa, xb = V[fv[:, 0]], V[fv[:, 1]]
        length = np.linalg.norm(xb - xa, axis=1)
        xf = xa[:, None, :] + srule.points[None, :, None] * (xb - xa)[:, None, :]
        tri = mesh.facet_tri[fids]
        evf = space.evaluate(xf.reshape(-1, 2), 1, locate_at=np.repeat(cen[tri], ns, axis=0))
        fidx = evf.indices.reshape(-1, ns, nb)[:, 0, :]
        Nf = evf.values.reshape(-1, ns, nb)
        dn = np.einsum("fqla,fa->fql", evf.grads.reshape(-1, ns, nb, 2), mesh.facet_normal[fids])
        wf = length[:, None] * srule.weights[None, :]
        Fe = (-np.einsum("fq,fqj,fqi->fij", wf, dn, Nf)
              + sgn * np.einsum("fq,fqi,fqj->fij", wf, dn, Nf)
              + (cp / h) * np.einsum("fq,fqi,fqj->fij", wf, Nf, Nf))
        K = (K + _scatter_matrix(fidx, fidx, Fe, n, n)).tocsr()
        gq = _eval_field(g, xf)
        F += _scatter_vector(fidx, np.einsum("fq,fq,fql->fl", wf, gq, sgn * dn + (cp / h) * Nf), n)
    K.sort_indices()
    return K, F
