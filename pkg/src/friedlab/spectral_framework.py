"""Neumann, Dirichlet, Robin and Dirichlet-to-Neumann spectra of a form system.

A :class:`FormSystem` is the matrix picture of a symmetric form ``a`` on a
space ``V`` together with an interior embedding (Gram ``M``) and a trace map
``j`` into a boundary space (matrix ``J``, Gram ``Mb``). All operators below
are built from those four matrices only:

* Neumann: ``A x = lam M x`` on all of ``V``;
* Dirichlet: the same pencil restricted to ``ker J``;
* Robin: ``(A - mu J^T Mb J) x = lam M x``;
* DtN at ``lam``: the form ``a - lam (.,.)_M`` on lam-harmonic extensions,
  as an operator on ``range J``. Boundary directions Mb-orthogonal to
  ``range J`` are the multivalued part of the graph and are reported apart.

Most computations happen in the orthonormal basis ``Q = [Z, W]`` with ``Z``
spanning ``ker J`` and ``W`` its complement. In that basis the Robin penalty
lives in the trailing block only, which keeps large negative ``mu`` accurate.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .eigsolve import (NULL_RTOL, NotSPD, cholesky_lower, dense, norm1, pencil_residuals,
                       svd_split, sym_generalized_eig)
from .errors import (DirichletResonance, EmptyKernel, GramNotPD, InsufficientEigenvalues)

RESONANCE_RTOL = 1e-8


def _sym(X):
    return 0.5 * (X + X.T)


@dataclass(frozen=True, eq=False)
class FormSystem:
    """Matrix realization of a form with interior and trace embeddings.

    Parameters
    ----------
    A : (n, n) array
        Symmetric positive semidefinite form matrix.
    M : (n, n) array
        SPD Gram matrix of the interior space.
    J : (k, n) array
        Trace map against the boundary basis. ``k`` may be zero.
    Mb : (k, k) array
        SPD Gram matrix of the boundary space.
    """

    A: np.ndarray
    M: np.ndarray
    J: np.ndarray
    Mb: np.ndarray
    rank_rtol: float = field(default=NULL_RTOL)

    def __post_init__(self):
        A, M, J, Mb = dense(self.A), dense(self.M), dense(self.J), dense(self.Mb)
        if J.ndim == 1:
            J = J.reshape(1, -1) if J.size else J.reshape(0, A.shape[0])
        n = A.shape[0]
        if A.shape != (n, n) or M.shape != (n, n) or n < 1:
            raise ValueError(f"A and M must be square of equal size, got {A.shape}, {M.shape}")
        k = J.shape[0]
        if J.shape != (k, n) or Mb.shape != (k, k):
            raise ValueError(f"J must be (k, {n}) and Mb (k, k), got {J.shape}, {Mb.shape}")
        for name, X in (("A", A), ("M", M), ("Mb", Mb)):
            if not np.allclose(X, X.T, rtol=1e-10, atol=1e-12 * max(norm1(X), 1e-300)):
                raise ValueError(f"{name} is not symmetric")
        try:
            LM = cholesky_lower(M)
            LMb = cholesky_lower(Mb) if k else np.zeros((0, 0))
        except NotSPD as exc:
            raise GramNotPD(str(exc)) from None
        object.__setattr__(self, "A", _sym(A))
        object.__setattr__(self, "M", _sym(M))
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "Mb", _sym(Mb))
        object.__setattr__(self, "_LM", LM)
        object.__setattr__(self, "_LMb", LMb)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def k(self):
        return self.J.shape[0]

    @cached_property
    def split(self):
        return svd_split(self.J, self.rank_rtol)

    @property
    def kernel(self):
        """Orthonormal basis of ``V_D = ker J``."""
        return self.split.null

    @cached_property
    def _q(self):
        # Q = [Z, W]: kernel first, then the row space of J.
        s = self.split
        Q = np.hstack([s.null, s.rowspace])
        nz = s.null.shape[1]
        JW = self.J @ s.rowspace
        T = np.zeros((self.n, self.n))
        T[nz:, nz:] = _sym(JW.T @ self.Mb @ JW)
        return Q, nz, _sym(Q.T @ self.A @ Q), _sym(Q.T @ self.M @ Q), T

    @cached_property
    def _dirichlet_full(self):
        Z = self.kernel
        if Z.shape[1] == 0:
            raise EmptyKernel("the trace map is injective; ker J = {0}")
        Q, nz, Aq, Mq, _ = self._q
        return sym_generalized_eig(Aq[:nz, :nz], Mq[:nz, :nz])

    def congruent(self, P):
        """The same system in the basis given by the columns of ``P``."""
        return FormSystem(P.T @ self.A @ P, P.T @ self.M @ P, self.J @ P, self.Mb, self.rank_rtol)

    def trace_ratio(self, X):
        """``||J x||_Mb / ||x||_M`` for each column of ``X``."""
        X = np.asarray(X).reshape(self.n, -1)
        JX = self.J @ X
        tr = np.einsum("ij,ij->j", JX, self.Mb @ JX)
        nx = np.einsum("ij,ij->j", X, self.M @ X)
        return np.sqrt(np.maximum(tr, 0.0) / np.where(nx > 0, nx, 1.0))

    def is_psd(self, rtol=1e-10):
        w = sla.eigvalsh(self.A)
        return bool(w[0] >= -rtol * max(abs(w[-1]), 1.0))


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues with B-orthonormal eigenvectors and residuals."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray

    def __len__(self):
        return len(self.eigenvalues)

    @classmethod
    def from_result(cls, res):
        return cls(res.eigenvalues, res.eigenvectors, res.residuals)


def _count(m, n, what):
    m = n if m is None else int(m)
    if m < 0 or m > n:
        raise InsufficientEigenvalues(f"asked for {m} {what} eigenvalues, only {n} exist")
    return m


def neumann_spectrum(fs, m=None):
    """First ``m`` eigenpairs of ``A x = lam M x``."""
    m = _count(m, fs.n, "Neumann")
    return Spectrum.from_result(sym_generalized_eig(fs.A, fs.M, m, factor=fs._LM))


def dirichlet_spectrum(fs, m=None):
    """First ``m`` eigenpairs of the pencil restricted to ``ker J``.

    Eigenvectors are returned in ``V`` coordinates.

    Raises
    ------
    EmptyKernel
        If ``J`` is injective.
    """
    full = fs._dirichlet_full
    m = _count(m, len(full), "Dirichlet")
    Z = fs.kernel
    X = Z @ full.eigenvectors[:, :m]
    lam = full.eigenvalues[:m]
    # residuals of the reduced pencil: the full one fails on the trace rows
    return Spectrum(lam, X, full.residuals[:m])


def robin_spectrum(fs, mu, m=None):
    """First ``m`` eigenpairs of ``(A - mu J^T Mb J) x = lam M x``.

    For ``mu < 0`` the resolvent pencil ``M x = theta (A_mu + M) x`` with
    ``theta = 1 / (1 + lam)`` is solved instead of the direct one. Its
    eigenvalues are bounded by one whatever the size of ``mu``, which keeps
    the small Robin eigenvalues accurate deep into the Dirichlet limit.
    """
    m = _count(m, fs.n, "Robin")
    mu = float(mu)
    Amu = fs.A - mu * (fs.J.T @ fs.Mb @ fs.J)
    if mu >= 0 or m == 0:
        res = sym_generalized_eig(Amu, fs.M, m, factor=fs._LM)
        return Spectrum.from_result(res)
    Q, nz, Aq, Mq, T = fs._q
    P = Aq - mu * T + Mq
    try:
        L = sla.cholesky(_sym(P), lower=True)
    except sla.LinAlgError:
        raise NotSPD("A - mu J^T Mb J + M is not positive definite; is A positive?") from None
    res = sym_generalized_eig(-Mq, P, m, factor=L)
    theta = -res.eigenvalues
    lam = 1.0 / theta - 1.0
    X = Q @ (res.eigenvectors / np.sqrt(theta))
    return Spectrum(lam, X, pencil_residuals(_sym(Amu), fs.M, lam, X))


@dataclass(frozen=True)
class DtnResult:
    """Spectrum of the Dirichlet-to-Neumann graph at a real shift.

    Attributes
    ----------
    shift : float
    eigenvalues : ndarray
        Spectrum of the single-valued part, ascending.
    eigenvectors : ndarray, shape (k, r)
        Mb-orthonormal boundary vectors spanning ``range J``.
    multivalued_basis : ndarray, shape (k, k - r)
        Mb-orthonormal basis of the Mb-orthogonal complement of ``range J``.
    resonance_flag : bool
        True when the shift is close to (but outside the tolerance of) a
        Dirichlet eigenvalue, i.e. within ``1e3 * tol``.
    nearest_dirichlet : float or None
    residuals : ndarray
    """

    shift: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    multivalued_basis: np.ndarray
    resonance_flag: bool
    nearest_dirichlet: float | None
    residuals: np.ndarray
    Mb: np.ndarray = field(repr=False)

    def quadratic_form(self, phi):
        """``(N phi, phi)`` in the boundary inner product.

        ``phi`` may be complex; the Mb-orthogonal projection onto the
        single-valued domain is applied first.
        """
        c = self.eigenvectors.T @ (self.Mb @ phi)
        return np.sum(self.eigenvalues * np.abs(c) ** 2)

    def project(self, phi):
        """Mb-orthogonal projection of boundary data onto ``range J``."""
        return self.eigenvectors @ (self.eigenvectors.T @ (self.Mb @ phi))


def _mb_orthonormalize(X, Mb):
    if X.shape[1] == 0:
        return X
    G = _sym(X.T @ Mb @ X)
    L = sla.cholesky(G, lower=True)
    return sla.solve_triangular(L, X.T, lower=True).T


def resonance_distance(fs, lam):
    """Distance from ``lam`` to the Dirichlet spectrum and the nearest eigenvalue."""
    if fs.kernel.shape[1] == 0:
        return np.inf, None
    wD = fs._dirichlet_full.eigenvalues
    i = int(np.argmin(np.abs(wD - lam)))
    return float(abs(wD[i] - lam)), float(wD[i])


def dtn_spectrum(fs, lam, tol=RESONANCE_RTOL):
    """Spectrum of the DtN graph of ``(a - lam (.,.)_M, j)``.

    Each trace in ``range J`` is lifted to the complement of ``ker J`` and
    corrected inside ``ker J`` so that it solves the shifted interior problem.
    The Dirichlet block is diagonalized once per form system, so a sweep over
    ``lam`` costs one small Schur complement per point.

    Raises
    ------
    DirichletResonance
        If ``lam`` is within ``tol * max(1, |lam|)`` of a Dirichlet eigenvalue.
    """
    lam = float(lam)
    atol = tol * max(1.0, abs(lam))
    dist, nearest = resonance_distance(fs, lam)
    if dist <= atol:
        raise DirichletResonance(lam, nearest, atol)
    s = fs.split
    r = s.rank
    Bl = fs.A - lam * fs.M
    Wl = s.rowspace / s.s
    Schur = Wl.T @ Bl @ Wl
    if s.null.shape[1]:
        D = fs._dirichlet_full
        Y = s.null @ D.eigenvectors
        F = Y.T @ (Bl @ Wl)
        Schur = Schur - F.T @ (F / (D.eigenvalues - lam)[:, None])
    Schur = _sym(Schur)
    G = _sym(s.range_.T @ fs.Mb @ s.range_)
    res = sym_generalized_eig(Schur, G, r)
    vecs = s.range_ @ res.eigenvectors
    corange = s.corange
    if corange.shape[1]:
        multi = _mb_orthonormalize(sla.cho_solve((fs._LMb, True), corange), fs.Mb)
    else:
        multi = np.zeros((fs.k, 0))
    return DtnResult(lam, res.eigenvalues, vecs, multi, bool(dist <= 1e3 * atol), nearest,
                     res.residuals, fs.Mb)


@dataclass
class BirmanSchwingerReport:
    """Pairings between Robin eigenvalues and DtN eigenvalues.

    Each entry of ``pairs`` is a dict with keys ``direction`` (``"robin->dtn"``
    or ``"dtn->robin"``), ``lam``, ``mu``, ``defect`` and ``status``
    (``"checked"``, ``"trace-free"`` or ``"resonant"``).
    """

    mu: float
    tol: float
    pairs: list

    @property
    def checked(self):
        return [p for p in self.pairs if p["status"] == "checked"]

    @property
    def max_defect(self):
        d = [p["defect"] for p in self.checked]
        return max(d) if d else 0.0

    @property
    def ok(self):
        return self.max_defect <= self.tol


def birman_schwinger_check(fs, mu, tol=1e-8, lambdas=None):
    """Check ``lam in sigma(A_mu)  <=>  mu in sigma(N_lam)`` both ways.

    Forward: every Robin eigenpair at ``mu`` with a trace ratio above ``tol``
    and a non-resonant eigenvalue must give ``mu`` in the DtN spectrum at that
    eigenvalue. Trace-free eigenvectors are listed but skipped; they are the
    only way the equivalence can break. Reverse: for every ``lam`` in
    ``lambdas`` (default: the forward eigenvalues plus midpoints between
    Dirichlet eigenvalues), each DtN eigenvalue ``mu'`` must yield ``lam`` in
    the Robin spectrum at ``mu'``. Defects are relative to ``max(1, |value|)``.
    """
    mu = float(mu)
    pairs = []
    rob = robin_spectrum(fs, mu)
    ratios = fs.trace_ratio(rob.eigenvectors)
    forward = []
    for lam, t in zip(rob.eigenvalues, ratios):
        entry = {"direction": "robin->dtn", "lam": float(lam), "mu": mu,
                 "trace_ratio": float(t), "defect": None}
        if t <= tol:
            entry["status"] = "trace-free"
        else:
            try:
                d = dtn_spectrum(fs, lam)
            except DirichletResonance:
                entry["status"] = "resonant"
            else:
                entry["defect"] = float(np.min(np.abs(d.eigenvalues - mu)) / max(1.0, abs(mu)))
                entry["status"] = "checked"
                forward.append(float(lam))
        pairs.append(entry)
    if lambdas is None:
        lambdas = list(forward)
        if fs.kernel.shape[1] > 1:
            wD = fs._dirichlet_full.eigenvalues
            lambdas += list(0.5 * (wD[1:] + wD[:-1]))
    for lam in lambdas:
        try:
            d = dtn_spectrum(fs, lam)
        except DirichletResonance:
            pairs.append({"direction": "dtn->robin", "lam": float(lam), "mu": None,
                          "defect": None, "status": "resonant"})
            continue
        for mu2 in d.eigenvalues:
            w = robin_spectrum(fs, mu2).eigenvalues
            pairs.append({"direction": "dtn->robin", "lam": float(lam), "mu": float(mu2),
                          "defect": float(np.min(np.abs(w - lam)) / max(1.0, abs(lam))),
                          "status": "checked"})
    return BirmanSchwingerReport(mu, tol, pairs)


@dataclass
class RobinSweep:
    """Robin spectra along a decreasing grid of ``mu`` values.

    ``monotone_violations`` and ``strict_violations`` list ``(i, n)`` grid
    step / eigenvalue index pairs where the nonincrease (resp. strict
    decrease, asserted only for traced eigenvectors) fails. ``limit_gaps``
    holds ``|lam_n(mu_last) - lam_n^D| / max(1, lam_n^D)``.
    """

    grid: np.ndarray
    spectra: list
    limit_reference: Spectrum | None
    monotone_violations: list
    strict_violations: list
    limit_gaps: np.ndarray

    def path(self, n):
        """Eigenvalue ``n`` (0-based) along the grid."""
        return np.array([s.eigenvalues[n] for s in self.spectra])


def robin_sweep(fs, grid, m=None, tol=1e-8, map_fn=map):
    """Robin spectra over a strictly decreasing nonpositive grid, with checks.

    Records every step where an eigenvalue increases as ``mu`` decreases, and
    every step where a traced eigenvector (trace ratio above ``tol``) fails
    to increase strictly. The last grid point is compared with the
    Dirichlet spectrum. ``map_fn`` may be an order-preserving parallel map
    such as ``ThreadPoolExecutor.map``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) >= 0) or np.any(grid > 0):
        raise ValueError("grid must be strictly decreasing and nonpositive")
    m = _count(m, fs.n, "Robin")
    spectra = list(map_fn(lambda mu: robin_spectrum(fs, mu, m), grid))
    mono, strict = [], []
    for i in range(1, len(grid)):
        prev, cur = spectra[i - 1], spectra[i]
        ratios = fs.trace_ratio(cur.eigenvectors)
        for n in range(m):
            d = cur.eigenvalues[n] - prev.eigenvalues[n]
            if d < -1e-12 * max(1.0, abs(cur.eigenvalues[n])):
                mono.append((i, n))
            if ratios[n] > tol and not d > 0:
                strict.append((i, n))
    ref = None
    gaps = np.zeros(0)
    if fs.kernel.shape[1]:
        md = min(m, fs.kernel.shape[1])
        ref = dirichlet_spectrum(fs, md)
        last = spectra[-1].eigenvalues[:md]
        gaps = np.abs(last - ref.eigenvalues) / np.maximum(1.0, np.abs(ref.eigenvalues))
    return RobinSweep(grid, spectra, ref, mono, strict, gaps)


def resolvent_gap(fs, mu):
    """``|| (I + A_mu)^-1 - (I + A_D)^-1 P ||`` in the operator norm of ``M``.

    ``(I + A_D)^-1`` is the Dirichlet resolvent extended by zero. The
    difference is formed from its Schur-complement block expression so that
    nothing cancels for large ``|mu|``.
    """
    if mu > 0:
        raise ValueError("resolvent comparison is defined for mu <= 0")
    Q, nz, Aq, Mq, T = fs._q
    P = Aq + Mq
    Pzz, Pzw = P[:nz, :nz], P[:nz, nz:]
    Pww = P[nz:, nz:] - mu * T[nz:, nz:]
    if nz:
        Pzz_inv_Pzw = sla.solve(Pzz, Pzw, assume_a="pos")
        S = Pww - Pzw.T @ Pzz_inv_Pzw
    else:
        Pzz_inv_Pzw = np.zeros((0, fs.n))
        S = Pww
    Sinv = sla.inv(_sym(S))
    D = np.zeros((fs.n, fs.n))
    D[:nz, :nz] = Pzz_inv_Pzw @ Sinv @ Pzz_inv_Pzw.T
    D[:nz, nz:] = -Pzz_inv_Pzw @ Sinv
    D[nz:, :nz] = D[:nz, nz:].T
    D[nz:, nz:] = Sinv
    # (I + A)^-1 acting on H is P^-1 Mq; its M-norm is that of L^T P^-1 L.
    L = sla.cholesky(Mq, lower=True)
    return float(np.max(np.abs(sla.eigvalsh(_sym(L.T @ D @ L)))))


@dataclass
class FriedlanderReport:
    """Per-index comparison ``lam^N_{n+1} + margin < lam^D_n``.

    ``gaps[n-1] = lam^D_n - lam^N_{n+1}`` for ``n = 1..n_max``.
    """

    n_max: int
    margin: np.ndarray
    gaps: np.ndarray
    passed: np.ndarray

    @property
    def verdict(self):
        return bool(np.all(self.passed))

    @property
    def first_failure(self):
        bad = np.flatnonzero(~self.passed)
        return int(bad[0]) + 1 if bad.size else None


def friedlander_check(neumann, dirichlet, n_max, margin=0.0):
    """Compare Neumann and Dirichlet eigenvalue lists index by index.

    ``neumann`` and ``dirichlet`` may be :class:`Spectrum` objects or plain
    ascending sequences. ``margin`` is a scalar or one value per index.
    """
    lamN = np.asarray(getattr(neumann, "eigenvalues", neumann), dtype=float)
    lamD = np.asarray(getattr(dirichlet, "eigenvalues", dirichlet), dtype=float)
    n_max = int(n_max)
    if lamN.size < n_max + 1 or lamD.size < n_max:
        raise InsufficientEigenvalues(
            f"need {n_max + 1} Neumann and {n_max} Dirichlet values, "
            f"got {lamN.size} and {lamD.size}")
    margin = np.broadcast_to(np.asarray(margin, dtype=float), (n_max,)).copy()
    gaps = lamD[:n_max] - lamN[1:n_max + 1]
    return FriedlanderReport(n_max, margin, gaps, gaps > margin)
