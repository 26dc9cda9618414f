"""Numerical experiments around the interlacing ``lam^N_{n+1} < lam^D_n``.

Each experiment builds the problem on a mesh and on its red refinement, so
every eigenvalue carries a Richardson error estimate
``e = |lam_h - lam_{h/2}| / (1 - 2^-p)``. A strict inequality is only
claimed when the gap beats ``margin_factor`` times the combined estimate.
The default ``p = 1`` is deliberately pessimistic: reentrant corners slow
convergence well below the smooth-case rate.
"""
import csv
import io
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fem_assembly as fem
from . import mesh as meshlib
from . import stokes_problems as sp_
from .errors import BadParameter, DirichletResonance, NonOrthogonal
from .spectral_framework import dtn_spectrum, friedlander_check

KINDS = ("laplacian", "stokes")


def build_problem(mesh, kind, alpha=0.0, element="taylor_hood"):
    if kind == "laplacian":
        return sp_.build_laplacian(mesh)
    if kind != "stokes":
        raise BadParameter(f"kind must be one of {KINDS}, got {kind!r}")
    if element == "mini":
        return sp_.build_stokes_oracle_mini(mesh, alpha)
    return sp_.build_stokes(mesh, alpha)


def square_laplacian_eigenvalues(count, bc):
    """``pi^2 (m^2 + n^2)`` over ``m, n >= 0`` (Neumann) or ``>= 1`` (Dirichlet), ascending."""
    lo = 0 if bc == "neumann" else 1
    r = int(np.ceil(np.sqrt(count))) + lo + 2
    vals = sorted(np.pi ** 2 * (i * i + j * j) for i in range(lo, lo + r) for j in range(lo, lo + r))
    return np.array(vals[:count])


def richardson_error(coarse, fine, order=1.0):
    coarse = np.asarray(coarse, dtype=float)
    fine = np.asarray(fine, dtype=float)
    return np.abs(coarse - fine) / (1.0 - 2.0 ** (-order))


@dataclass
class ExperimentReport:
    """Eigenvalue tables, gaps, error estimates and the verdict of one run.

    ``neumann``/``dirichlet`` hold the values at mesh size ``h``;
    ``*_fine`` those at ``h/2``. ``gaps[n-1] = dirichlet[n-1] - neumann[n]``
    and ``error_estimates[n-1]`` is the sum of the two Richardson estimates
    entering that gap.
    """

    domain: str
    kind: str
    alpha: float
    h: float
    n_max: int
    sides: int
    margin_factor: float
    order: float
    ndof: list
    neumann: np.ndarray
    dirichlet: np.ndarray
    neumann_fine: np.ndarray
    dirichlet_fine: np.ndarray
    gaps: np.ndarray
    error_estimates: np.ndarray
    passed: np.ndarray
    runtime: float
    method: str
    mesh_hash: str = ""
    notes: list = field(default_factory=list)

    @property
    def verdict(self):
        return bool(np.all(self.passed))

    def recompute(self):
        """Gaps, estimates and verdict re-derived from the stored tables."""
        eN = richardson_error(self.neumann, self.neumann_fine, self.order)
        eD = richardson_error(self.dirichlet, self.dirichlet_fine, self.order)
        err = eD[:self.n_max] + eN[1:self.n_max + 1]
        rep = friedlander_check(self.neumann, self.dirichlet, self.n_max, self.margin_factor * err)
        return rep.gaps, err, rep.verdict

    def is_consistent(self):
        gaps, err, verdict = self.recompute()
        return (np.array_equal(gaps, self.gaps) and np.array_equal(err, self.error_estimates)
                and verdict == self.verdict)

    def to_dict(self):
        d = asdict(self)
        d["verdict"] = self.verdict
        d["margin_policy"] = (f"gap > {self.margin_factor:g} x Richardson estimate "
                              f"(assumed order {self.order:g}); artifact policy, not a theorem")
        return d


def run_friedlander(domain, kind, alpha=0.0, h=1 / 16, n_max=8, sides=16, margin_factor=5.0,
                    order=1.0, method="auto", element="taylor_hood"):
    """Interlacing report on ``domain`` at ``h`` with a Richardson check from ``h/2``."""
    t0 = time.perf_counter()
    coarse = meshlib.generate(domain, h, sides)
    tables = []
    ndof = []
    used = []
    for mesh in (coarse, meshlib.refine(coarse)):
        prob = build_problem(mesh, kind, alpha, element)
        meth = method if method != "auto" else ("dense" if prob.dense_ok else "sparse")
        used.append(meth)
        ndof.append(prob.ndof)
        N = sp_.solve_spectrum(prob, "neumann", n_max + 1, meth).eigenvalues
        D = sp_.solve_spectrum(prob, "dirichlet", n_max, meth).eigenvalues
        tables.append((N, D))
    (N, D), (Nf, Df) = tables
    eN = richardson_error(N, Nf, order)
    eD = richardson_error(D, Df, order)
    err = eD + eN[1:]
    rep = friedlander_check(N, D, n_max, margin_factor * err)
    return ExperimentReport(domain, kind, float(alpha), float(h), int(n_max), int(sides),
                            float(margin_factor), float(order), ndof, N, D, Nf, Df, rep.gaps, err,
                            rep.passed, time.perf_counter() - t0, "/".join(used),
                            meshlib.fingerprint(coarse))


# ---------------------------------------------------------------- witnesses


@dataclass(frozen=True)
class WitnessValue:
    """Discrete ``(N_lam phi, phi)`` for a complex plane-wave witness."""

    real: float
    imag: float
    trace_norm_sq: float
    lam: float

    @property
    def normalized(self):
        return abs(complex(self.real, self.imag)) / self.trace_norm_sq

    def __iter__(self):
        return iter((self.real, self.imag))


def witness_trace(problem, omega, b=None):
    """Boundary coefficients of ``b exp(i omega . x)`` (or ``exp(i omega . x)``).

    For Stokes the trace is Mb-orthogonally projected onto zero normal flux.
    """
    omega = np.asarray(omega, dtype=float)
    v = problem.velocity

    def part(fn):
        if problem.is_stokes:
            return v.interpolate(lambda x, y: np.array([b[0] * fn(omega[0] * x + omega[1] * y),
                                                        b[1] * fn(omega[0] * x + omega[1] * y)]))
        return v.interpolate(lambda x, y: fn(omega[0] * x + omega[1] * y))

    phi = problem.J @ part(np.cos) + 1j * (problem.J @ part(np.sin))
    if problem.is_stokes:
        r = sp_.nu_riesz(problem)
        phi = phi - (problem.nu_flux @ phi) / (problem.nu_flux @ r) * r
    return phi


def _check_witness(problem, omega, b):
    omega = np.asarray(omega, dtype=float)
    if problem.is_stokes:
        if b is None:
            raise NonOrthogonal("Stokes witnesses need a polarization b")
        b = np.asarray(b, dtype=float)
        if abs(b @ omega) > 1e-12:
            raise NonOrthogonal(f"b . omega = {b @ omega:.3e}; need b orthogonal to omega")
        if abs(np.linalg.norm(b) - 1.0) > 1e-12:
            raise BadParameter("the polarization b must have unit length")
    return omega, b


def witness_rayleigh(problem, omega, b=None, method="sparse"):
    """DtN quadratic form at ``lam = |omega|^2`` of the plane-wave witness.

    The continuum value is exactly zero; the discrete value measures how
    far the discretization is from that identity. ``method="dense"`` uses
    the FormSystem DtN spectrum, ``"sparse"`` a lam-harmonic extension.

    Raises
    ------
    NonOrthogonal
        If ``b`` is not orthogonal to ``omega``.
    DirichletResonance
        If ``|omega|^2`` is a Dirichlet eigenvalue within tolerance.
    """
    omega, b = _check_witness(problem, omega, b)
    lam = float(omega @ omega)
    phi = witness_trace(problem, omega, b)
    norm = float(np.real(np.conj(phi) @ (problem.Mb @ phi)))
    if method == "dense":
        val = complex(dtn_spectrum(problem.fs, lam).quadratic_form(phi))
    else:
        val = sp_.dtn_form_value(problem, lam, phi)
    return WitnessValue(val.real, val.imag, norm, lam)


def witness_boundary_identity(mesh, omega, b=None):
    """``i |b|^2 int (omega . nu) |tau|^2`` over the boundary by Gauss quadrature.

    ``|tau| = 1``, so the value is ``i |b|^2 omega . sum(L nu)``, which
    vanishes for a closed boundary.
    """
    omega = np.asarray(omega, dtype=float)
    bb = 1.0 if b is None else float(np.dot(b, b))
    s, w = fem.EDGE_GAUSS3
    p = mesh.vertices[mesh.boundary_edges]
    total = 0.0
    for sk, wk in zip(s, w):
        x = (1 - sk) * p[:, 0] + sk * p[:, 1]
        tau = np.exp(1j * (x @ omega))
        total += wk * np.sum(mesh.edge_lengths * (mesh.normals @ omega) * np.abs(tau) ** 2)
    return 1j * bb * total


def witness_study(domain, kind, alpha, h_list, omega, b=None, sides=16):
    """Normalized witness values over a refinement sequence and observed orders."""
    vals = []
    for h in h_list:
        prob = build_problem(meshlib.generate(domain, h, sides), kind, alpha)
        vals.append(witness_rayleigh(prob, omega, b))
    normed = np.array([v.normalized for v in vals])
    hs = np.asarray(h_list, dtype=float)
    orders = np.log(normed[:-1] / normed[1:]) / np.log(hs[:-1] / hs[1:])
    return {"h": hs, "values": vals, "normalized": normed, "orders": orders}


# ---------------------------------------------------------------- DtN sign


@dataclass
class DtnNegativityReport:
    entries: list

    @property
    def ok(self):
        """Negative minimum for every ``lam > 0``; nonnegative (to 1e-10) at ``lam = 0``."""
        for e in self.entries:
            if e["status"] != "ok":
                continue
            if e["lam"] > 0 and not e["min"] < 0:
                return False
            if e["lam"] == 0 and e["min"] < -1e-10:
                return False
        return any(e["status"] == "ok" for e in self.entries)


def dtn_negativity(problem, lambdas):
    """Smallest DtN eigenvalue and the number of negative ones per shift.

    Resonant shifts are recorded and skipped.
    """
    entries = []
    for lam in lambdas:
        lam = float(lam)
        if lam < 0:
            raise BadParameter(f"shifts must be nonnegative, got {lam}")
        try:
            d = dtn_spectrum(problem.fs, lam)
        except DirichletResonance as exc:
            entries.append({"lam": lam, "status": "resonant", "note": str(exc)})
            continue
        scale = max(1.0, float(np.max(np.abs(d.eigenvalues))))
        entries.append({"lam": lam, "status": "ok", "min": float(d.eigenvalues[0]),
                        "negative_count": int(np.sum(d.eigenvalues < -1e-10 * scale)),
                        "resonance_flag": d.resonance_flag})
    return DtnNegativityReport(entries)


# ---------------------------------------------------------------- convergence


@dataclass
class ConvergenceReport:
    h: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    orders: np.ndarray
    reference: float | None


def convergence_study(domain, kind, alpha, h_list, n, bc="dirichlet", exact=None, sides=16,
                      method="auto"):
    """Observed order of eigenvalue ``n`` (1-based) over ``h_list``.

    With ``exact`` the orders come from true errors; otherwise from
    successive differences (one fewer order).
    """
    hs = np.asarray(h_list, dtype=float)
    if hs.size < 3 or np.any(np.diff(hs) >= 0):
        raise BadParameter("h_list must be strictly decreasing with at least 3 entries")
    vals = []
    for h in hs:
        prob = build_problem(meshlib.generate(domain, h, sides), kind, alpha)
        vals.append(sp_.solve_spectrum(prob, bc, n, method).eigenvalues[n - 1])
    vals = np.array(vals)
    if exact is not None:
        errs = np.abs(vals - exact)
        hh = hs
    else:
        errs = np.abs(np.diff(vals))
        hh = hs[:-1]
    orders = np.log(errs[:-1] / errs[1:]) / np.log(hh[:-1] / hh[1:])
    return ConvergenceReport(hs, vals, errs, orders, exact)


# ---------------------------------------------------------------- output


CSV_COLUMNS = ("index", "lambda_N", "lambda_D", "gap", "error_estimate")


def report_csv(report):
    """Rows ``n, lam^N_{n+1}, lam^D_n, gap_n, e_n`` for ``n = 1..n_max``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for n in range(1, report.n_max + 1):
        w.writerow([n] + [format(float(x), ".17g") for x in (
            report.neumann[n], report.dirichlet[n - 1], report.gaps[n - 1],
            report.error_estimates[n - 1])])
    return buf.getvalue()
