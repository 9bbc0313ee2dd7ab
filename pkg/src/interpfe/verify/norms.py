"""Element-wise error norms of foreground fields."""
from __future__ import annotations

import math

import numpy as np

from ..meshgen import ForegroundMesh
from ..quadrature import gauss_triangle
from ..spaces import shape_functions


def _error_rule(kappa: int):
    return gauss_triangle(min(8, 2 * kappa + 4))


def _element_data(mesh: ForegroundMesh, kappa: int, max_deriv: int):
    V, T = mesh.vertices, mesh.triangles
    rule = _error_rule(kappa)
    N, dN, d2N = shape_functions(kappa, rule.ref)
    x0 = V[T[:, 0]]
    J = np.stack([V[T[:, 1]] - x0, V[T[:, 2]] - x0], axis=-1)
    detJ = np.abs(np.linalg.det(J))
    Jinv = np.linalg.inv(J)
    x = x0[:, None, :] + np.einsum("tij,qj->tqi", J, rule.ref)
    w = detJ[:, None] * rule.weights[None, :]
    G = np.einsum("tba,qlb->tqla", Jinv, dN)
    H = np.einsum("tba,qlbd,tdc->tqlac", Jinv, d2N, Jinv) if max_deriv >= 2 else None
    return x, w, N, G, H


def error_norms(mesh: ForegroundMesh, kappa: int, c, case) -> dict:
    """L2, H1-seminorm and broken H2 errors of the foreground field ``c``.

    ``case`` needs ``u`` and ``grad`` callables and optionally ``hess``.
    ``H2_broken`` is the square root of the sum over elements of the full
    squared H2 norm (value, first and second derivatives) of the error; it
    is ``None`` when the case has no Hessian.
    """
    _, dofmap = mesh.lagrange_nodes(kappa)
    has_h = getattr(case, "hess", None) is not None
    x, w, N, G, H = _element_data(mesh, kappa, 2 if has_h else 1)
    cl = np.asarray(c, dtype=float)[dofmap]
    X, Y = x[..., 0], x[..., 1]
    e0 = np.einsum("ql,tl->tq", N, cl) - np.broadcast_to(case.u(X, Y), X.shape)
    e1 = np.einsum("tqla,tl->tqa", G, cl) - np.broadcast_to(case.grad(X, Y), x.shape)
    l2 = float(np.sum(w * e0 ** 2))
    h1 = float(np.sum(w * np.sum(e1 ** 2, axis=-1)))
    out = {"L2": math.sqrt(l2), "H1_semi": math.sqrt(h1), "H2_broken": None}
    if has_h:
        e2 = np.einsum("tqlab,tl->tqab", H, cl) - np.broadcast_to(case.hess(X, Y), x.shape + (2,))
        h2 = float(np.sum(w * np.sum(e2 ** 2, axis=(-1, -2))))
        out["H2_broken"] = math.sqrt(l2 + h1 + h2)
    return out


def stress_error(mesh: ForegroundMesh, kappa: int, c, stress, lam: float, mu: float) -> float:
    """L2 norm of the Frobenius norm of ``sigma(u_h) - sigma_exact``.

    ``c`` is the block displacement vector ``[u_x nodes, u_y nodes]``.
    """
    nodes, dofmap = mesh.lagrange_nodes(kappa)
    nn = len(nodes)
    c = np.asarray(c, dtype=float)
    x, w, _, G, _ = _element_data(mesh, kappa, 1)
    gu = np.stack([np.einsum("tqla,tl->tqa", G, c[:nn][dofmap]),
                   np.einsum("tqla,tl->tqa", G, c[nn:][dofmap])], axis=-2)  # du_a/dx_b
    eps = 0.5 * (gu + np.swapaxes(gu, -1, -2))
    tr = eps[..., 0, 0] + eps[..., 1, 1]
    sig = 2 * mu * eps + lam * tr[..., None, None] * np.eye(2)
    err = sig - stress(x[..., 0], x[..., 1])
    return math.sqrt(float(np.sum(w * np.sum(err ** 2, axis=(-1, -2)))))


def displacement_error(mesh: ForegroundMesh, kappa: int, c, u, grad=None):
    """L2 and H1-seminorm errors of the block displacement vector ``c``.

    Returns ``(L2, H1_semi)``; the seminorm is ``None`` without ``grad``.
    """
    nodes, dofmap = mesh.lagrange_nodes(kappa)
    nn = len(nodes)
    c = np.asarray(c, dtype=float)
    x, w, N, G, _ = _element_data(mesh, kappa, 1)
    cx, cy = c[:nn][dofmap], c[nn:][dofmap]
    uh = np.stack([np.einsum("ql,tl->tq", N, cx), np.einsum("ql,tl->tq", N, cy)], axis=-1)
    err = uh - u(x[..., 0], x[..., 1])
    l2 = math.sqrt(float(np.sum(w * np.sum(err ** 2, axis=-1))))
    if grad is None:
        return l2, None
    gu = np.stack([np.einsum("tqla,tl->tqa", G, cx), np.einsum("tqla,tl->tqa", G, cy)], axis=-2)
    eg = gu - grad(x[..., 0], x[..., 1])
    return l2, math.sqrt(float(np.sum(w * np.sum(eg ** 2, axis=(-1, -2)))))
