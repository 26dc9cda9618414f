"""Laplacian and Stokes instances of the form-system machinery.

The Laplacian uses P2 Lagrange elements on ``V = H^1``. Stokes uses
Taylor-Hood (P2 velocity, P1 pressure), with the divergence constraint
removed by an explicit orthonormal basis ``Z`` of ``ker B``. The reduced
matrices ``Z^T K_alpha Z``, ``Z^T M Z``, ``J Z`` and ``Mb`` form an ordinary
:class:`~friedlab.spectral_framework.FormSystem`, so every abstract
statement applies verbatim.

Pressure convention: ``B[q, u] = int q div u``, and an eigenpair satisfies
``(K_alpha - lam M) u = B^T pi``, i.e. ``-Delta u + grad pi = lam u``.

Dense linear algebra is used up to :data:`DENSE_MAX_DOF` velocity dofs.
Larger meshes go through sparse saddle-point solves instead. They use the
same matrices and are cross-checked against the dense route in the tests.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem_assembly as fem
from .eigsolve import constrained_eigsh, dense, svd_split
from .errors import BadAlpha, DirichletResonance, FluxNotZero, IllConditioned, SingularShift
from .spectral_framework import RESONANCE_RTOL, FormSystem, Spectrum, dirichlet_spectrum, \
    neumann_spectrum

DENSE_MAX_DOF = 3000
BC = ("neumann", "dirichlet")


@dataclass(frozen=True, eq=False)
class DiscreteProblem:
    """A discretized Laplacian or Stokes problem with its FEM bookkeeping.

    ``K`` already contains the ``alpha`` term. ``J`` selects the boundary
    dofs of the full velocity space and ``nu_flux`` is the boundary
    normal-flux functional (empty for the Laplacian). ``Z`` and ``fs`` are
    built on first access since they are dense.
    """

    kind: str
    alpha: float
    mesh: object
    velocity: fem.DofMap
    pressure: fem.DofMap | None
    K: sp.csr_matrix
    M: sp.csr_matrix
    B: sp.csr_matrix | None
    J: sp.csr_matrix
    Mb: sp.csr_matrix
    nu_flux: np.ndarray
    element: str = "P2"

    @property
    def ndof(self):
        return self.velocity.ndof

    @property
    def k(self):
        return self.J.shape[0]

    @property
    def is_stokes(self):
        return self.kind == "stokes"

    @cached_property
    def Z(self):
        """Orthonormal basis of the discrete divergence-free space (identity for the Laplacian)."""
        if not self.is_stokes:
            return np.eye(self.ndof)
        return svd_split(self.B).null

    @cached_property
    def fs(self):
        Z = self.Z
        if not self.is_stokes:
            return FormSystem(self.K, self.M, self.J, self.Mb)
        KZ = self.K @ Z
        MZ = self.M @ Z
        return FormSystem(Z.T @ KZ, Z.T @ MZ, self.J @ Z, self.Mb)

    def lift(self, x):
        """Map V coordinates to velocity coefficients."""
        return self.Z @ x

    @cached_property
    def interior_B(self):
        """Divergence rows restricted to interior velocity dofs, one row dropped.

        ``1^T B_I = 0`` (a field vanishing on the boundary has zero flux), so
        one pressure row is redundant; the last one is removed.
        """
        BI = self.B[:, self.velocity.interior_dofs]
        return BI[:-1]

    @property
    def dense_ok(self):
        return self.ndof <= DENSE_MAX_DOF


def _problem_matrices(mesh, vel):
    K = fem.stiffness(mesh, vel)
    M = fem.mass(mesh, vel)
    J, Mb, flux = fem.boundary_mass_and_trace(mesh, vel)
    return K, M, J, Mb, flux


def build_laplacian(mesh):
    """P2 Laplacian with ``V = H^1``, ``H = L2(Omega)`` and ``K = L2(boundary)``."""
    vel = fem.DofMap(mesh, "P2_scalar")
    K, M, J, Mb, flux = _problem_matrices(mesh, vel)
    return DiscreteProblem("laplacian", 0.0, mesh, vel, None, K, M, None, J, Mb, flux)


def _check_alpha(alpha):
    alpha = float(alpha)
    if not -1.0 < alpha <= 1.0:
        raise BadAlpha(f"alpha must lie in (-1, 1], got {alpha}")
    return alpha


def _build_vector(mesh, alpha, kind, element, check_rank):
    alpha = _check_alpha(alpha)
    vel = fem.DofMap(mesh, kind)
    pre = fem.DofMap(mesh, "P1_scalar")
    K, M, J, Mb, flux = _problem_matrices(mesh, vel)
    if alpha != 0.0:
        K = (K + alpha * fem.transpose_gradient_form(mesh, vel)).tocsr()
    B = fem.divergence(mesh, vel, pre)
    prob = DiscreteProblem("stokes", alpha, mesh, vel, pre, K, M, B, J, Mb, flux, element)
    if check_rank:
        r = trace_rank(prob)
        if r != prob.k - 1:
            raise AssertionError(f"rank(J Z) = {r}, expected k - 1 = {prob.k - 1}")
    return prob


def build_stokes(mesh, alpha=0.0, check_rank=True):
    """Taylor-Hood Stokes problem with the form ``int grad u : grad v + alpha (grad u)^T : grad v``.

    Raises
    ------
    BadAlpha
        If ``alpha`` is outside ``(-1, 1]``.
    """
    return _build_vector(mesh, alpha, "P2_vector2", "taylor_hood", check_rank)


def build_stokes_oracle_mini(mesh, alpha=0.0, check_rank=True):
    """Same contract as :func:`build_stokes` with the MINI pair (P1 + bubble / P1)."""
    return _build_vector(mesh, alpha, "P1B_vector2", "mini", check_rank)


def _rank(A):
    A = dense(A)
    if A.size == 0:
        return 0
    s = sla.svdvals(A)
    return int(np.sum(s > 1e-12 * s[0])) if s[0] > 0 else 0


def _is_pd(S):
    """Sparse SPD test: smallest over largest eigenvalue above ``1e-14``."""
    S = sp.csc_matrix(S)
    top = spla.eigsh(S, k=1, which="LA", return_eigenvectors=False)[0]
    try:
        low = spla.eigsh(S, k=1, sigma=-1e-3 * top, which="LM", return_eigenvectors=False)[0]
    except RuntimeError:
        return False
    return bool(low > 1e-14 * top)


def trace_rank(problem):
    """``rank(J Z)`` without forming ``Z``.

    ``dim ker B - dim ker [B; J] = k + rank(B_I) - rank(B)`` where ``B_I``
    keeps the interior velocity columns. Small meshes use singular values.
    Large ones test ``B B^T`` and ``B_I B_I^T + e e^T`` (``e`` the normalized
    constant, always in the kernel of ``B_I^T``) for definiteness, which
    decides whether ``rank B = n_p`` and ``rank B_I = n_p - 1``.
    """
    if not problem.is_stokes:
        return problem.k
    B = problem.B
    BI = B[:, problem.velocity.interior_dofs]
    n_p = B.shape[0]
    if n_p <= 1500:
        return problem.k + _rank(BI) - _rank(B)
    e = np.full((n_p, 1), 1.0 / np.sqrt(n_p))
    full = _is_pd(B @ B.T)
    scale = spla.norm(BI @ BI.T, 1)
    corank_one = _is_pd(BI @ BI.T + scale * sp.csr_matrix(e @ e.T))
    if full and corank_one:
        return problem.k - 1
    # fall back to the exact count when the quick test is inconclusive
    return problem.k + _rank(BI) - _rank(B)


# ---------------------------------------------------------------- spectra


def _sparse_system(problem, bc):
    """Form, Gram and constraint matrices of the saddle formulation on the free dofs."""
    if bc == "neumann":
        idx = np.arange(problem.ndof)
        C = problem.B
    else:
        idx = problem.velocity.interior_dofs
        C = problem.interior_B if problem.is_stokes else None
    K = problem.K[idx][:, idx]
    M = problem.M[idx][:, idx]
    return idx, K, M, C


def solve_spectrum(problem, bc, m, method="auto", sigma=-1.0):
    """First ``m`` eigenpairs with eigenvectors as full velocity coefficients.

    ``method`` is ``"dense"`` (the FormSystem route), ``"sparse"`` (shift-invert
    on the saddle system) or ``"auto"`` (dense up to :data:`DENSE_MAX_DOF`).
    Eigenvectors are M-orthonormal.
    """
    if bc not in BC:
        raise ValueError(f"bc must be one of {BC}, got {bc!r}")
    if method == "auto":
        method = "dense" if problem.dense_ok else "sparse"
    if method == "dense":
        spec = (neumann_spectrum if bc == "neumann" else dirichlet_spectrum)(problem.fs, m)
        return Spectrum(spec.eigenvalues, problem.lift(spec.eigenvectors), spec.residuals)
    if method != "sparse":
        raise ValueError(f"unknown method {method!r}")
    idx, K, M, C = _sparse_system(problem, bc)
    res = constrained_eigsh(K, M, m, C=C, sigma=sigma)
    X = np.zeros((problem.ndof, m))
    X[idx] = res.eigenvectors
    return Spectrum(res.eigenvalues, X, res.residuals)


def nearest_dirichlet(problem, lam, method="auto"):
    """Dirichlet eigenvalue closest to ``lam``."""
    if method == "auto":
        method = "dense" if problem.dense_ok else "sparse"
    if method == "dense":
        w = problem.fs._dirichlet_full.eigenvalues
        return float(w[np.argmin(np.abs(w - lam))])
    idx, K, M, C = _sparse_system(problem, "dirichlet")
    # sigma slightly off lam keeps the shifted matrix regular if lam is an eigenvalue
    shift = lam + 1e-7 * max(1.0, abs(lam))
    try:
        res = constrained_eigsh(K, M, 1, C=C, sigma=shift)
    except SingularShift:
        return float(lam)
    return float(res.eigenvalues[0])


# ---------------------------------------------------------------- pressure & boundary


@dataclass(frozen=True)
class StokesEigenfunction:
    """Velocity/pressure eigenpair with its residual norms."""

    lam: float
    u: np.ndarray
    pi: np.ndarray
    residuals: dict


def recover_pressure(problem, u, lam, bc):
    """Least-squares P1 pressure with ``(K_alpha - lam M) u = B^T pi``.

    The equation is tested against every velocity dof (Neumann) or the
    interior ones (Dirichlet). In the Dirichlet case constants are invisible
    and the zero-mean gauge is imposed.

    Raises
    ------
    IllConditioned
        If the normal equations have condition number above ``1e12``.
    """
    if not problem.is_stokes:
        raise ValueError("pressure recovery needs a Stokes problem")
    if bc not in BC:
        raise ValueError(f"bc must be one of {BC}, got {bc!r}")
    u = np.asarray(u, dtype=float)
    r = problem.K @ u - lam * (problem.M @ u)
    Bt = problem.B.T.tocsr()
    if bc == "dirichlet":
        rows = problem.velocity.interior_dofs
        mean = fem.mass(problem.mesh, problem.pressure) @ np.ones(problem.pressure.ndof)
        A = np.vstack([dense(Bt[rows]), mean[None, :] / np.linalg.norm(mean)])
        rhs = np.concatenate([r[rows], [0.0]])
    else:
        A = dense(Bt)
        rhs = r
    N = A.T @ A
    w = sla.eigvalsh(N)
    if w[0] <= w[-1] * 1e-12:
        raise IllConditioned(f"pressure normal equations have condition {w[-1] / max(w[0], 1e-300):.3e}")
    return sla.solve(N, A.T @ rhs, assume_a="pos")


def momentum_residual(problem, u, pi, lam, bc):
    """Relative size of ``(K_alpha - lam M) u - B^T pi`` on the test dofs."""
    r = problem.K @ u - lam * (problem.M @ u)
    if pi is not None and problem.is_stokes:
        r = r - problem.B.T @ pi
    if bc == "dirichlet":
        r = r[problem.velocity.interior_dofs]
    scale = (abs(lam) * np.linalg.norm(problem.M @ u) + np.linalg.norm(problem.K @ u))
    return float(np.linalg.norm(r) / max(scale, 1e-300))


def eigenfunctions(problem, bc, m, method="auto"):
    """Eigenpairs with recovered pressures and residual bookkeeping."""
    spec = solve_spectrum(problem, bc, m, method)
    out = []
    for lam, u in zip(spec.eigenvalues, spec.eigenvectors.T):
        pi = recover_pressure(problem, u, lam, bc) if problem.is_stokes else None
        div = float(np.linalg.norm(problem.B @ u) / np.linalg.norm(u)) if problem.is_stokes else 0.0
        out.append(StokesEigenfunction(float(lam), u, pi, {
            "momentum": momentum_residual(problem, u, pi, lam, bc), "divergence": div}))
    return out


def nu_riesz(problem):
    """Mb-Riesz representative of ``phi -> int phi . nu``."""
    return spla.spsolve(problem.Mb.tocsc(), problem.nu_flux)


def weak_normal_derivative(problem, u, pi, f):
    """Boundary coefficients ``F`` of the weak normal derivative.

    ``(F, J Phi)_Mb = a(u, Phi) - int pi div Phi - int f . Phi`` for all
    velocity fields ``Phi``. Only boundary-nodal ``Phi`` enter, since the
    right side vanishes on interior ones for a solution.
    """
    g = problem.K @ u - problem.M @ f
    if problem.is_stokes and pi is not None:
        g = g - problem.B.T @ pi
    return spla.spsolve(problem.Mb.tocsc(), problem.J @ g)


def mb_norm(problem, phi):
    return float(np.sqrt(max(phi @ (problem.Mb @ phi), 0.0)))


def natural_boundary_residual(problem, u, pi, lam):
    """Natural boundary residual of a Neumann eigenpair, measured one level finer.

    On the mesh it was computed on, a discrete Neumann eigenpair makes the
    weak normal derivative vanish identically. Interpolating ``(u, pi)`` to
    the red refinement and testing against the finer boundary functions
    measures how far the pair is from satisfying the natural condition.
    Returns ``||F||_Mb / ||u||_M`` on the refined mesh.
    """
    from .mesh import refine

    fine_mesh = refine(problem.mesh)
    if problem.is_stokes:
        fine = _build_vector(fine_mesh, problem.alpha, problem.velocity.kind, problem.element, False)
        Pp = fem.prolongation(problem.pressure, fine.pressure)
        pif = Pp @ pi
    else:
        fine = build_laplacian(fine_mesh)
        pif = None
    P = fem.prolongation(problem.velocity, fine.velocity)
    uf = P @ u
    F = weak_normal_derivative(fine, uf, pif, lam * uf)
    return mb_norm(fine, F) / np.sqrt(uf @ (fine.M @ uf))


# ---------------------------------------------------------------- Helmholtz


def _gradient_pairing(mesh):
    """``G[a, u] = int grad psi_a . u`` for P2 scalars ``psi_a`` and P2 vectors ``u``."""
    s = fem.DofMap(mesh, "P2_scalar")
    v = fem.DofMap(mesh, "P2_vector2")
    area, w, vals, g = fem._tabulate(mesh, "P2")
    en = s.element_nodes
    n = s.n_nodes
    blocks = []
    for p in range(2):
        local = np.einsum("q,t,tqa,qb->tab", w, area, g[..., p], vals)
        blocks.append(fem._scatter(en, en, local, (n, n)))
    return s, v, sp.hstack(blocks, format="csr")


def _project_out_gradients(mesh, f, scalar_dofs):
    """Remove the M-Riesz gradients of the selected P2 scalar dofs from ``f``.

    The gradient of a P2 function is not a P2 vector field, so it is
    represented through ``R = M^-1 G^T``: ``(R pi, v)_M = (grad pi, v)`` for
    every P2 vector ``v``. The returned field is M-orthogonal to ``range R``.
    """
    s, v, G = _gradient_pairing(mesh)
    G = G[scalar_dofs(s)]
    M = fem.mass(mesh, v).tocsc()
    f = np.asarray(f, dtype=float)
    if not np.any(f):
        return np.zeros_like(f)
    lu = spla.splu(M)
    R = lu.solve(dense(G.T))
    S = G @ R
    pi = sla.solve(0.5 * (S + S.T), G @ f, assume_a="pos")
    return f - R @ pi


def helmholtz_project_sigma(mesh, f):
    """Projection onto the discrete analog of ``L2_sigma``.

    Gradients of all P2 scalars (modulo constants, by pinning node 0) are
    removed.
    """
    return _project_out_gradients(mesh, f, lambda s: np.arange(1, s.n_nodes))


def helmholtz_project_v(mesh, f):
    """Projection onto the discrete closure of ``V``: gradients of P2 scalars vanishing on the boundary are removed."""
    return _project_out_gradients(mesh, f, lambda s: s.interior_nodes)


def discrete_gradient(mesh, psi):
    """M-Riesz representative ``M^-1 G^T psi`` of ``grad psi`` as a P2 vector."""
    _, v, G = _gradient_pairing(mesh)
    return spla.spsolve(fem.mass(mesh, v).tocsc(), G.T @ psi)


# ---------------------------------------------------------------- extensions


def _saddle_solve(H, C, rhs_u, rhs_c):
    n = H.shape[0]
    if C is None or C.shape[0] == 0:
        return spla.splu(H.tocsc()).solve(rhs_u), None
    S = sp.bmat([[H, C.T], [C, None]], format="csc")
    try:
        sol = spla.splu(S).solve(np.concatenate([rhs_u, rhs_c]))
    except RuntimeError as exc:
        raise SingularShift(f"saddle system is singular: {exc}") from None
    return sol[:n], sol[n:]


def divergence_free_extension(problem, phi, tol=1e-8):
    """Velocity of least ``H^1`` norm with ``B u = 0`` and ``J u = phi``.

    Raises
    ------
    FluxNotZero
        If ``|int phi . nu| > tol * ||phi||_Mb``.
    """
    phi = np.asarray(phi, dtype=float)
    if problem.is_stokes:
        flux = float(problem.nu_flux @ phi)
        if abs(flux) > tol * mb_norm(problem, phi):
            raise FluxNotZero(f"boundary data has normal flux {flux:.3e}")
    interior = problem.velocity.interior_dofs
    bd = problem.velocity.boundary_dofs
    H = (problem.K + problem.M).tocsr()
    u = np.zeros(problem.ndof)
    u[bd] = phi
    rhs = -(H[interior][:, bd] @ phi)
    if problem.is_stokes:
        C = problem.interior_B
        rhs_c = -(problem.B[:-1][:, bd] @ phi)
    else:
        C, rhs_c = None, None
    u[interior], _ = _saddle_solve(H[interior][:, interior], C, rhs, rhs_c)
    return u


def dtn_form_value(problem, lam, phi, check_resonance=True, tol=RESONANCE_RTOL):
    """``(N_lam phi, phi)`` through a sparse lam-harmonic extension.

    ``phi`` must lie in the single-valued domain (zero flux for Stokes). The
    extension ``u`` has trace ``phi``, is divergence-free, and satisfies
    ``b_lam(u, v) = 0`` for interior divergence-free ``v``. The value is
    ``b_lam(u, u)``. Complex ``phi`` is split into real and imaginary parts,
    and the sesquilinear value is returned as a Python complex.
    """
    if check_resonance:
        near = nearest_dirichlet(problem, lam)
        atol = tol * max(1.0, abs(lam))
        if abs(near - lam) <= atol:
            raise DirichletResonance(lam, near, atol)
    phi = np.asarray(phi)
    parts = [np.real(phi).astype(float), np.imag(phi).astype(float)]
    interior = problem.velocity.interior_dofs
    bd = problem.velocity.boundary_dofs
    Bl = (problem.K - lam * problem.M).tocsr()
    C = problem.interior_B if problem.is_stokes else None
    ext = []
    for p in parts:
        u = np.zeros(problem.ndof)
        u[bd] = p
        if np.any(p):
            rhs = -(Bl[interior][:, bd] @ p)
            rhs_c = -(problem.B[:-1][:, bd] @ p) if problem.is_stokes else None
            u[interior], _ = _saddle_solve(Bl[interior][:, interior], C, rhs, rhs_c)
        ext.append(u)
    a, b = ext
    re = a @ (Bl @ a) + b @ (Bl @ b)
    im = a @ (Bl @ b) - b @ (Bl @ a)
    return complex(re, im)
