import numpy as np
import pytest

from friedlab import mesh as meshlib
from friedlab import stokes_problems as sp_
from friedlab.spectral_framework import FormSystem


def random_form_system(rng, n=None, k=None):
    """A = G^T G (PSD, possibly singular), random SPD Grams, dense random trace map."""
    n = int(rng.integers(2, 13)) if n is None else n
    k = int(rng.integers(1, 5)) if k is None else k
    r = int(rng.integers(1, n + 1))
    G = rng.standard_normal((r, n))
    C = rng.standard_normal((n, n))
    Cb = rng.standard_normal((k, k))
    A = G.T @ G
    M = C.T @ C / n + 0.5 * np.eye(n)
    Mb = Cb.T @ Cb / k + 0.5 * np.eye(k)
    J = rng.standard_normal((k, n))
    return FormSystem(A, M, J, Mb)


@pytest.fixture
def hand_system():
    return FormSystem(np.diag([1.0, 2.0]), np.eye(2), np.array([[1.0, 0.0]]), np.array([[1.0]]))


@pytest.fixture(scope="session")
def square8():
    return meshlib.generate("square", 1 / 8)


@pytest.fixture(scope="session")
def laplace8(square8):
    return sp_.build_laplacian(square8)


@pytest.fixture(scope="session")
def laplace16():
    return sp_.build_laplacian(meshlib.generate("square", 1 / 16))


@pytest.fixture(scope="session")
def stokes8(square8):
    return sp_.build_stokes(square8, 0.0)


@pytest.fixture(scope="session")
def stokes8_korn(square8):
    return sp_.build_stokes(square8, 1.0)
