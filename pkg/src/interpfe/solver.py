"""Galerkin triple product, linear solves in background dofs, recovery."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ArgumentError, SolverError
from .extraction import ExtractionMatrix, interpolate

DEFAULT_ITERATIVE_TOL = 1e-12
_EXPLICIT_ZERO = 1e-300
# pivot ratio above which the matrix is treated as numerically singular
SINGULAR_PIVOT_RATIO = 1e12
# a near-null vector z is harmless when |M z| <= NULL_VISIBLE_TOL |M| |z|
NULL_VISIBLE_TOL = 1e-8


def _sparse(M) -> sp.csr_matrix:
    if isinstance(M, ExtractionMatrix):
        return M.matrix
    return sp.csr_matrix(M)


def _canonical(K: sp.spmatrix) -> sp.csr_matrix:
    """CSR with sorted unique column indices and no stored (near-)zeros."""
    K = sp.csr_matrix(K)
    K.sum_duplicates()
    K.data[np.abs(K.data) < _EXPLICIT_ZERO] = 0.0
    K.eliminate_zeros()
    K.sort_indices()
    return K


def triple_product(M, A) -> sp.csr_matrix:
    """``K = M^T A M`` via two sparse-sparse products."""
    Ms = _sparse(M)
    As = sp.csr_matrix(A)
    if As.shape[0] != As.shape[1] or As.shape[0] != Ms.shape[0]:
        raise ArgumentError(f"incompatible shapes: A {As.shape}, M {Ms.shape}")
    return _canonical(Ms.T.tocsr() @ (As @ Ms))


def restrict_rhs(M, B) -> np.ndarray:
    """``F = M^T B``."""
    Ms = _sparse(M)
    B = np.asarray(B, dtype=float)
    if B.ndim != 1 or B.size != Ms.shape[0]:
        raise ArgumentError(f"load vector has length {B.size}, expected {Ms.shape[0]}")
    return Ms.T @ B


def recover_foreground(M, d) -> np.ndarray:
    """Foreground coefficients ``c = M d``."""
    return interpolate(M, d)


@dataclass
class SolveReport:
    method: str
    iterations: int | None
    residual: float
    tol: float | None
    wall_time: float
    n: int
    condition_estimate: float | None = None
    krylov: str | None = None
    message: str = ""
    null_mode_visible: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _relative_residual(K, d, F) -> float:
    nF = np.linalg.norm(F)
    r = np.linalg.norm(K @ d - F)
    return float(r / nF) if nF > 0 else float(r)


def _check_zero_rows(K: sp.csr_matrix, report: SolveReport):
    nnz_row = np.diff(K.indptr)
    absK = abs(K)
    row_mass = np.asarray(absK.sum(axis=1)).ravel()
    col_mass = np.asarray(absK.sum(axis=0)).ravel()
    bad = np.flatnonzero((nnz_row == 0) | (row_mass == 0) | (col_mass == 0))
    if bad.size:
        report.message = f"zero row/column at background dof {int(bad[0])}"
        raise SolverError(f"system matrix has a zero row or column at dof {int(bad[0])} "
                          f"({bad.size} in total)", report)


def solve(K, F, method: str = "direct", tol: float | None = None, symmetric: bool | None = None,
          observe=None):
    """Solve ``K d = F``.

    ``direct`` uses a sparse LU factorization with partial pivoting. When the
    pivots span more than ``SINGULAR_PIVOT_RATIO`` and ``observe`` (the
    background-to-foreground operator ``M``) is given, a near-null vector
    ``z`` of ``K`` is found by inverse iteration: if ``M z`` is negligible the
    singularity lives in background directions the foreground never sees
    (``c = M d`` is unique) and the solve proceeds; otherwise the foreground
    solution is not unique and a :class:`SolverError` is raised.
    ``iterative`` uses Jacobi-preconditioned CG when ``K`` is symmetric and
    BiCGSTAB otherwise, with at most ``10 n`` iterations. When ``tol`` is
    given the final relative residual must not exceed it.
    """
    K = sp.csr_matrix(K)
    F = np.asarray(F, dtype=float)
    n = K.shape[0]
    if K.shape[0] != K.shape[1]:
        raise ArgumentError(f"system matrix must be square, got {K.shape}")
    if F.shape != (n,):
        raise ArgumentError(f"right-hand side has shape {F.shape}, expected ({n},)")
    if method not in ("direct", "iterative"):
        raise ArgumentError(f"unknown solver method {method!r}")
    t0 = time.perf_counter()
    report = SolveReport(method=method, iterations=None, residual=float("nan"),
                         tol=tol, wall_time=0.0, n=n)
    _check_zero_rows(K, report)
    if method == "direct":
        d = _direct(K, F, report, observe)
    else:
        if tol is None:
            tol = DEFAULT_ITERATIVE_TOL
            report.tol = tol
        if symmetric is None:
            asym = abs(K - K.T).max() if n else 0.0
            symmetric = asym <= 1e-13 * max(abs(K).max(), 1e-300)
        d = _iterative(K, F, tol, bool(symmetric), report)
    report.wall_time = time.perf_counter() - t0
    report.residual = _relative_residual(K, d, F)
    if not np.all(np.isfinite(d)):
        report.message = "non-finite solution"
        raise SolverError("solve produced non-finite values", report)
    if tol is not None and report.residual > tol:
        report.message = "residual above tolerance"
        raise SolverError(f"relative residual {report.residual:.3e} exceeds tol {tol:.1e}", report)
    return d, report


def _direct(K, F, report, observe=None):
    try:
        lu = spla.splu(K.tocsc())
    except RuntimeError as exc:  # "Factor is exactly singular"
        report.message = str(exc)
        raise SolverError(f"sparse factorization failed: {exc}", report) from exc
    diagU = np.abs(lu.U.diagonal())
    if diagU.size:
        report.condition_estimate = float(diagU.max() / max(diagU.min(), 1e-300))
        if diagU.min() == 0.0 or not np.isfinite(diagU).all():
            report.message = "numerically singular factorization"
            raise SolverError("numerically singular factorization", report)
        if observe is not None and report.condition_estimate > SINGULAR_PIVOT_RATIO:
            vis = _null_visibility(lu, _sparse(observe), K.shape[0])
            report.null_mode_visible = vis
            if vis > NULL_VISIBLE_TOL:
                report.message = "singular system with a foreground-visible null mode"
                raise SolverError("system matrix is singular and the null mode changes the "
                                  f"foreground solution (|M z| / |M| |z| = {vis:.2e})", report)
    return lu.solve(F)


def _null_visibility(lu, M, n, iters: int = 4) -> float:
    """``|M z| / (|M| |z|)`` for a near-null vector ``z`` from inverse iteration."""
    z = np.random.default_rng(12345).standard_normal(n)
    for _ in range(iters):
        z = lu.solve(z)
        z /= np.linalg.norm(z)
    nM = spla.norm(M, 1) if M.nnz else 1.0
    return float(np.linalg.norm(M @ z) / max(nM, 1e-300))


def _iterative(K, F, tol, symmetric, report):
    n = K.shape[0]
    diag = K.diagonal()
    if np.any(diag == 0):
        jac = np.ones(n)
    else:
        jac = 1.0 / diag
    P = spla.LinearOperator((n, n), matvec=lambda v: jac * v, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    kw = dict(rtol=tol, atol=0.0, maxiter=10 * max(n, 1), M=P, callback=cb)
    if symmetric:
        d, info = spla.cg(K, F, **kw)
        report.krylov = "cg"
    else:
        d, info = spla.bicgstab(K, F, **kw)
        report.krylov = "bicgstab"
    report.iterations = count[0]
    if info != 0:
        report.residual = _relative_residual(K, d, F)
        report.message = f"no convergence (info={info})"
        raise SolverError(f"{report.krylov} did not converge within {10 * n} iterations", report)
    return d
