"""Dense symmetric linear algebra kernel.

Everything in here works on dense ``numpy`` arrays; sparse inputs are
densified at the boundary. The single exception is
:func:`constrained_eigsh`, a shift-invert Lanczos route through the
saddle-point form of a constrained pencil. It exists for refinement levels
too large for the dense path and is cross-checked against it in the tests.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NotSPD, SingularShift

EIG_RTOL = 1e-10
NULL_RTOL = 1e-12


def dense(A):
    """Return ``A`` as a dense float array (no copy if already dense)."""
    if sp.issparse(A):
        return A.toarray()
    return np.asarray(A, dtype=float)


def norm1(A):
    """Cheap operator-norm surrogate: the max absolute column sum."""
    if sp.issparse(A):
        return float(abs(A).sum(axis=0).max()) if A.nnz else 0.0
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    return float(np.abs(A).sum(axis=0).max())


@dataclass(frozen=True)
class DenseSymEigResult:
    """Eigenpairs of a symmetric-definite pencil ``(A, B)``.

    Attributes
    ----------
    eigenvalues : ndarray, shape (m,)
        Ascending.
    eigenvectors : ndarray, shape (n, m)
        B-orthonormal columns.
    residuals : ndarray, shape (m,)
        ``||A x - lam B x|| / ((||A|| + |lam| ||B||) ||x||)`` per pair.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray

    def __len__(self):
        return len(self.eigenvalues)


def pencil_residuals(A, B, w, X):
    AX = A @ X
    BX = B @ X
    scale = (norm1(A) + np.abs(w) * norm1(B)) * np.linalg.norm(X, axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return np.linalg.norm(AX - BX * w, axis=0) / scale


def cholesky_lower(B):
    """Lower Cholesky factor of an SPD matrix, raising :class:`NotSPD`."""
    B = dense(B)
    if B.shape[0] != B.shape[1]:
        raise NotSPD(f"Gram matrix must be square, got shape {B.shape}")
    try:
        return sla.cholesky(0.5 * (B + B.T), lower=True)
    except sla.LinAlgError as exc:
        raise NotSPD(f"matrix is not positive definite: {exc}") from None


def sym_generalized_eig(A, B, m=None, factor=None):
    """First ``m`` eigenpairs of ``A x = lam B x`` with ``B`` SPD.

    ``B = L L^T`` is reduced away, the standard problem
    ``L^-1 A L^-T y = lam y`` goes to LAPACK's symmetric solver, and
    ``x = L^-T y``. A precomputed lower factor may be passed as ``factor``.
    """
    A = dense(A)
    B = dense(B)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape != (n, n):
        raise ValueError(f"incompatible pencil shapes {A.shape} and {B.shape}")
    m = n if m is None else int(m)
    if not 0 <= m <= n:
        raise ValueError(f"requested {m} eigenpairs from a pencil of size {n}")
    if m == 0:
        return DenseSymEigResult(np.zeros(0), np.zeros((n, 0)), np.zeros(0))
    L = cholesky_lower(B) if factor is None else factor
    C = sla.solve_triangular(L, A, lower=True)
    C = sla.solve_triangular(L, C.T, lower=True)
    C = 0.5 * (C + C.T)
    if m < n:
        w, Y = sla.eigh(C, subset_by_index=[0, m - 1], driver="evr")
    else:
        w, Y = sla.eigh(C, driver="evd")
    X = sla.solve_triangular(L.T, Y, lower=False)
    return DenseSymEigResult(w, X, pencil_residuals(A, B, w, X))


class SVDSplit(NamedTuple):
    """Four fundamental subspaces of a matrix from one SVD.

    ``range_`` / ``corange`` are orthonormal bases of the column space and
    its complement; ``rowspace`` / ``null`` those of the row space and the
    kernel. ``s`` holds the retained singular values.
    """

    rank: int
    range_: np.ndarray
    corange: np.ndarray
    rowspace: np.ndarray
    null: np.ndarray
    s: np.ndarray


def svd_split(B, rtol=NULL_RTOL):
    """Split ``B`` with threshold ``rtol * s_max`` on the singular values."""
    B = dense(B)
    k, n = B.shape
    if k == 0 or n == 0 or not np.any(B):
        return SVDSplit(0, np.zeros((k, 0)), np.eye(k), np.zeros((n, 0)), np.eye(n), np.zeros(0))
    U, s, Vt = sla.svd(B, full_matrices=True, lapack_driver="gesdd")
    r = int(np.sum(s > rtol * s[0]))
    return SVDSplit(r, U[:, :r], U[:, r:], Vt[:r].T, Vt[r:].T, s[:r])


def nullspace(B, rtol=NULL_RTOL):
    """Orthonormal basis of ``ker B`` (columns)."""
    return svd_split(B, rtol).null


def sym_solve(A, rhs, tol=1e-12):
    """Solve ``A X = rhs`` for symmetric, possibly indefinite ``A``.

    Raises
    ------
    SingularShift
        If the smallest eigenvalue magnitude is below ``tol * ||A||``.
    """
    A = dense(A)
    rhs = np.asarray(rhs, dtype=float)
    w, Q = sla.eigh(0.5 * (A + A.T))
    scale = np.max(np.abs(w)) if w.size else 0.0
    if w.size and np.min(np.abs(w)) <= tol * scale:
        raise SingularShift(
            f"shifted matrix is numerically singular (min |eig| = {np.min(np.abs(w)):.3e})"
        )
    coef = Q.T @ rhs
    coef = coef / (w[:, None] if coef.ndim == 2 else w)
    return Q @ coef


def constrained_eigsh(K, M, m, C=None, sigma=-1.0, seed=0):
    """Smallest ``m`` eigenpairs of ``K x = lam M x`` on ``{x : C x = 0}``.

    Solved as the pencil ``([[K, C^T], [C, 0]], diag(M, 0))`` by shift-invert
    Lanczos around ``sigma`` with a sparse LU of the shifted saddle matrix.
    ``C`` must have full row rank. The start vector is seeded, so runs are
    reproducible.
    """
    K = sp.csr_matrix(K)
    M = sp.csr_matrix(M)
    n = K.shape[0]
    if C is None or C.shape[0] == 0:
        Kaug, Maug, nc = K, M, 0
    else:
        C = sp.csr_matrix(C)
        nc = C.shape[0]
        Kaug = sp.bmat([[K, C.T], [C, None]], format="csr")
        Maug = sp.block_diag([M, sp.csr_matrix((nc, nc))], format="csr")
    shifted = (Kaug - sigma * Maug).tocsc()
    try:
        lu = spla.splu(shifted)
    except RuntimeError as exc:
        raise SingularShift(f"shifted saddle matrix is singular: {exc}") from None
    N = n + nc
    OPinv = spla.LinearOperator((N, N), matvec=lu.solve, dtype=float)
    v0 = np.random.default_rng(seed).standard_normal(N)
    ncv = min(N, max(2 * m + 1, m + 20))
    w, Zaug = spla.eigsh(Kaug, k=m, M=Maug, sigma=sigma, OPinv=OPinv, v0=v0, ncv=ncv)
    order = np.argsort(w)
    w = w[order]
    Zaug = Zaug[:, order]
    X = Zaug[:n]
    scale = np.sqrt(np.einsum("ij,ij->j", X, M @ X))
    Zaug = Zaug / scale
    X = Zaug[:n]
    R = K @ X - (M @ X) * w
    if nc:
        R = R + C.T @ Zaug[n:]
    denom = (norm1(K) + np.abs(w) * norm1(M)) * np.linalg.norm(X, axis=0)
    return DenseSymEigResult(w, X, np.linalg.norm(R, axis=0) / denom)
