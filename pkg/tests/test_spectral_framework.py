import numpy as np
import pytest

from conftest import random_form_system
from friedlab.errors import (DirichletResonance, EmptyKernel, GramNotPD, InsufficientEigenvalues)
from friedlab.friedlander_lab import square_laplacian_eigenvalues
from friedlab.spectral_framework import (FormSystem, birman_schwinger_check, dirichlet_spectrum,
                                         dtn_spectrum, friedlander_check, neumann_spectrum,
                                         resolvent_gap, robin_spectrum, robin_sweep)


def test_zero_form():
    fs = FormSystem(np.zeros((3, 3)), np.eye(3), np.zeros((0, 3)), np.zeros((0, 0)))
    np.testing.assert_allclose(neumann_spectrum(fs, 3).eigenvalues, 0, atol=1e-15)


def test_hand_system_spectra(hand_system):
    np.testing.assert_allclose(neumann_spectrum(hand_system).eigenvalues, [1, 2], atol=1e-12)
    np.testing.assert_allclose(dirichlet_spectrum(hand_system).eigenvalues, [2], atol=1e-12)
    np.testing.assert_allclose(robin_spectrum(hand_system, 0.5).eigenvalues, [0.5, 2], atol=1e-12)
    lam1 = robin_spectrum(hand_system, -1e8, 1).eigenvalues[0]
    assert abs(lam1 - 2) / 2 < 1e-7


def test_dirichlet_spectrum_vectors_are_traceless(hand_system):
    X = dirichlet_spectrum(hand_system).eigenvectors
    np.testing.assert_allclose(hand_system.J @ X, 0, atol=1e-15)


def test_zero_trace_map_gives_neumann():
    rng = np.random.default_rng(5)
    fs0 = random_form_system(rng, n=6, k=2)
    fs = FormSystem(fs0.A, fs0.M, np.zeros((2, 6)), fs0.Mb)
    np.testing.assert_allclose(dirichlet_spectrum(fs).eigenvalues, neumann_spectrum(fs).eigenvalues,
                               atol=1e-12)


def test_robin_at_zero_is_neumann():
    fs = random_form_system(np.random.default_rng(2))
    np.testing.assert_allclose(robin_spectrum(fs, 0.0).eigenvalues, neumann_spectrum(fs).eigenvalues,
                               atol=1e-12)


def test_gram_not_pd():
    with pytest.raises(GramNotPD):
        FormSystem(np.eye(2), np.diag([1.0, -1.0]), np.zeros((1, 2)), np.eye(1))
    with pytest.raises(GramNotPD):
        FormSystem(np.eye(2), np.eye(2), np.ones((1, 2)), np.zeros((1, 1)))


def test_empty_kernel():
    fs = FormSystem(np.eye(2), np.eye(2), np.eye(2), np.eye(2))
    with pytest.raises(EmptyKernel):
        dirichlet_spectrum(fs)


def test_dtn_hand_values(hand_system):
    for lam, expected in ((0.0, 1.0), (0.5, 0.5), (1.5, -0.5)):
        d = dtn_spectrum(hand_system, lam)
        np.testing.assert_allclose(d.eigenvalues, [expected], atol=1e-12)
        assert d.multivalued_basis.shape == (1, 0)
    with pytest.raises(DirichletResonance):
        dtn_spectrum(hand_system, 2.0)


def test_dtn_resonance_flag(hand_system):
    assert dtn_spectrum(hand_system, 2.0 - 1e-6).resonance_flag
    assert not dtn_spectrum(hand_system, 1.0).resonance_flag


def test_birman_schwinger_hand(hand_system):
    rep = birman_schwinger_check(hand_system, 0.5)
    fwd = [p for p in rep.pairs if p["direction"] == "robin->dtn"]
    assert fwd[0]["status"] == "checked" and fwd[0]["lam"] == pytest.approx(0.5)
    assert fwd[0]["defect"] < 1e-14
    # e2 has zero trace: the equivalence is not claimed for it
    assert fwd[1]["status"] == "trace-free"
    assert rep.ok


def test_birman_schwinger_random():
    rng = np.random.default_rng(11)
    for _ in range(20):
        fs = random_form_system(rng)
        for mu in (-2.0, 0.7):
            rep = birman_schwinger_check(fs, mu)
            assert rep.ok, rep.max_defect


def test_sweep_hand(hand_system):
    sw = robin_sweep(hand_system, [0, -1, -10, -1e4])
    np.testing.assert_allclose(sw.path(0), [1, 2, 2, 2], atol=1e-9)
    assert not sw.monotone_violations
    sw0 = robin_sweep(hand_system, [0])
    np.testing.assert_allclose(sw0.spectra[0].eigenvalues, [1, 2])


def test_sweep_rejects_bad_grid(hand_system):
    with pytest.raises(ValueError):
        robin_sweep(hand_system, [0, -1, -1])
    with pytest.raises(ValueError):
        robin_sweep(hand_system, [1, 0])


def test_sweep_random_monotone_and_limit():
    rng = np.random.default_rng(4)
    grid = np.concatenate([[0.0], -np.logspace(-2, 8, 19)])
    for _ in range(10):
        fs = random_form_system(rng)
        sw = robin_sweep(fs, grid)
        assert not sw.monotone_violations
        assert not sw.strict_violations
        assert np.all(sw.limit_gaps <= 1e-4)


def test_sweep_square_laplacian_limit(laplace8):
    grid = np.concatenate([[0.0], -np.logspace(0, 6, 7)])
    sw = robin_sweep(laplace8.fs, grid, 3)
    lamD = sw.limit_reference.eigenvalues[0]
    assert abs(sw.spectra[-1].eigenvalues[0] - lamD) / lamD < 1e-3
    assert not sw.monotone_violations


def test_square_laplacian_values(laplace16):
    N = neumann_spectrum(laplace16.fs, 2).eigenvalues
    D = dirichlet_spectrum(laplace16.fs, 1).eigenvalues
    assert abs(N[1] - np.pi ** 2) / np.pi ** 2 < 5e-3
    assert abs(D[0] - 2 * np.pi ** 2) / (2 * np.pi ** 2) < 5e-3


def test_dtn_zero_shift_positive():
    rng = np.random.default_rng(8)
    checked = 0
    for _ in range(20):
        fs = random_form_system(rng)
        try:
            d = dtn_spectrum(fs, 0.0)
        except DirichletResonance:
            # ker A meets ker J: 0 is a Dirichlet eigenvalue
            continue
        assert d.eigenvalues.min() >= -1e-10
        checked += 1
    assert checked >= 10


def test_dtn_eigenvectors_orthogonal_to_multivalued(stokes8):
    d = dtn_spectrum(stokes8.fs, 5.0)
    assert d.multivalued_basis.shape[1] == 1
    Mb = stokes8.fs.Mb
    np.testing.assert_allclose(d.eigenvectors.T @ Mb @ d.multivalued_basis, 0, atol=1e-10)
    np.testing.assert_allclose(d.eigenvectors.T @ Mb @ d.eigenvectors, np.eye(d.eigenvectors.shape[1]),
                               atol=1e-9)
    # the excluded direction is the Riesz representative of the normal flux
    nu = np.linalg.solve(Mb, stokes8.nu_flux)
    nu /= np.sqrt(nu @ Mb @ nu)
    assert abs(abs(nu @ Mb @ d.multivalued_basis[:, 0]) - 1) < 1e-10


def test_resolvent_limit():
    rng = np.random.default_rng(9)
    for _ in range(10):
        fs = random_form_system(rng)
        gaps = [resolvent_gap(fs, mu) for mu in (-1e2, -1e4, -1e6, -1e8)]
        assert all(b <= a * (1 + 1e-9) for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] <= 1e-6


def test_change_of_basis_invariance():
    rng = np.random.default_rng(10)
    fs = random_form_system(rng, n=8, k=3)
    P = np.eye(8) + 0.2 * rng.standard_normal((8, 8)) / np.sqrt(8)
    fs2 = fs.congruent(P)
    for f in (neumann_spectrum, dirichlet_spectrum):
        a, b = f(fs).eigenvalues, f(fs2).eigenvalues
        np.testing.assert_allclose(a, b, atol=1e-10 * max(1, abs(a).max()))
    a, b = robin_spectrum(fs, -3.0).eigenvalues, robin_spectrum(fs2, -3.0).eigenvalues
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(dtn_spectrum(fs, 0.3).eigenvalues, dtn_spectrum(fs2, 0.3).eigenvalues,
                               rtol=1e-9, atol=1e-10)


def test_friedlander_check_lists():
    rep = friedlander_check([0, 1], [2], 1)
    assert rep.verdict and rep.gaps[0] == 1
    rep = friedlander_check([0, 3], [2], 1)
    assert not rep.verdict and rep.first_failure == 1
    with pytest.raises(InsufficientEigenvalues):
        friedlander_check([0], [2], 1)


def test_friedlander_closed_form_square():
    N = square_laplacian_eigenvalues(11, "neumann")
    D = square_laplacian_eigenvalues(10, "dirichlet")
    assert friedlander_check(N, D, 10).verdict
