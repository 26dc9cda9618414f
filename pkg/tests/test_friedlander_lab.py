import csv
import io
import json

import numpy as np
import pytest

from friedlab import friedlander_lab as lab
from friedlab import mesh as meshlib
from friedlab import stokes_problems as sp_
from friedlab.errors import BadParameter, NonOrthogonal
from friedlab.serialize import dumps

B_DIAG = np.array([1.0, -1.0]) / np.sqrt(2)
OMEGA = np.array([np.pi, np.pi])


@pytest.fixture(scope="module")
def quick_report():
    return lab.run_friedlander("square", "laplacian", h=0.25, n_max=4)


def test_closed_forms():
    np.testing.assert_allclose(lab.square_laplacian_eigenvalues(4, "neumann") / np.pi ** 2, [0, 1, 1, 2])
    np.testing.assert_allclose(lab.square_laplacian_eigenvalues(4, "dirichlet") / np.pi ** 2, [2, 5, 5, 8])


def test_richardson():
    np.testing.assert_allclose(lab.richardson_error([1.1], [1.05]), [0.1])
    np.testing.assert_allclose(lab.richardson_error([1.1], [1.05], order=2), [0.05 / 0.75])


def test_report_shapes(quick_report):
    r = quick_report
    assert r.neumann.size == 5 and r.dirichlet.size == 4
    np.testing.assert_array_equal(r.gaps, r.dirichlet - r.neumann[1:])
    assert r.verdict
    assert r.is_consistent()


def test_report_tamper_detected(quick_report):
    d = quick_report.to_dict()
    r = lab.ExperimentReport(**{k: d[k] for k in lab.ExperimentReport.__dataclass_fields__})
    r.gaps = r.gaps + 1e-9
    assert not r.is_consistent()


def test_report_json_roundtrip(quick_report):
    d = json.loads(dumps(quick_report.to_dict()))
    assert d["verdict"] is True
    assert "artifact policy" in d["margin_policy"]
    assert d["gaps"] == [float(x) for x in quick_report.gaps]


def test_huge_margin_fails():
    r = lab.run_friedlander("square", "laplacian", h=0.25, n_max=4, margin_factor=1e9)
    assert not r.verdict and r.is_consistent()


def test_bad_kind():
    with pytest.raises(BadParameter):
        lab.build_problem(meshlib.generate("square", 0.5), "maxwell")


def test_csv(quick_report):
    rows = list(csv.reader(io.StringIO(lab.report_csv(quick_report))))
    assert tuple(rows[0]) == lab.CSV_COLUMNS
    assert len(rows) == 5
    n, lN, lD, gap, _ = rows[2]
    assert int(n) == 2
    assert float(lN) == quick_report.neumann[2]
    assert float(lD) == quick_report.dirichlet[1]
    assert float(gap) == quick_report.gaps[1]


# ---------------------------------------------------------------- witnesses


def test_witness_requires_orthogonal_b(stokes8):
    with pytest.raises(NonOrthogonal):
        lab.witness_rayleigh(stokes8, OMEGA, np.array([1.0, 0.0]))
    with pytest.raises(NonOrthogonal):
        lab.witness_rayleigh(stokes8, OMEGA)
    with pytest.raises(BadParameter):
        lab.witness_rayleigh(stokes8, OMEGA, 2 * B_DIAG)


@pytest.mark.parametrize("domain", meshlib.DOMAINS)
def test_witness_boundary_identity(domain):
    m = meshlib.generate(domain, 0.2)
    assert abs(lab.witness_boundary_identity(m, OMEGA, B_DIAG)) < 1e-10
    assert abs(lab.witness_boundary_identity(m, np.array([2.0, -0.5]))) < 1e-10


def test_witness_trace_flux_free(stokes8):
    phi = lab.witness_trace(stokes8, OMEGA, B_DIAG)
    assert abs(stokes8.nu_flux @ phi) < 1e-12


def test_witness_dense_matches_sparse(stokes8, laplace8):
    for prob, b in ((stokes8, B_DIAG), (laplace8, None)):
        d = lab.witness_rayleigh(prob, OMEGA, b, method="dense")
        s = lab.witness_rayleigh(prob, OMEGA, b, method="sparse")
        assert abs(complex(*d) - complex(*s)) <= 1e-8 * abs(complex(*d))
        assert d.lam == pytest.approx(2 * np.pi ** 2)


def test_witness_shrinks(laplace8, laplace16):
    assert lab.witness_rayleigh(laplace16, OMEGA).normalized < lab.witness_rayleigh(laplace8, OMEGA).normalized


# ---------------------------------------------------------------- DtN sign


def test_dtn_negativity_laplacian(laplace8):
    rep = lab.dtn_negativity(laplace8, [0.0, 10.0, 30.0, 60.0])
    assert rep.ok
    assert rep.entries[0]["min"] >= -1e-10
    assert all(e["min"] < 0 and e["negative_count"] >= 1 for e in rep.entries[1:])


def test_dtn_negativity_skips_resonance(laplace8):
    lamD = sp_.nearest_dirichlet(laplace8, 20.0)
    rep = lab.dtn_negativity(laplace8, [lamD, 10.0])
    assert rep.entries[0]["status"] == "resonant"
    assert rep.ok


def test_dtn_negativity_rejects_negative(laplace8):
    with pytest.raises(BadParameter):
        lab.dtn_negativity(laplace8, [-1.0])


def test_dtn_negativity_stokes(stokes8):
    rep = lab.dtn_negativity(stokes8, [0.0, 40.0])
    assert rep.ok and rep.entries[1]["min"] < 0


# ---------------------------------------------------------------- convergence


def test_convergence_square_laplacian():
    rep = lab.convergence_study("square", "laplacian", 0.0, [0.25, 0.125, 0.0625], 1,
                                exact=2 * np.pi ** 2)
    assert np.all(rep.orders >= 3.5)
    assert np.all(np.diff(rep.errors) < 0)


def test_convergence_without_reference():
    rep = lab.convergence_study("lshape", "laplacian", 0.0, [0.5, 0.25, 0.125], 1)
    assert rep.orders.size == 1 and rep.reference is None
    assert np.all(np.isfinite(rep.values))


def test_convergence_bad_h_list():
    with pytest.raises(BadParameter):
        lab.convergence_study("square", "laplacian", 0.0, [0.25, 0.125], 1)
    with pytest.raises(BadParameter):
        lab.convergence_study("square", "laplacian", 0.0, [0.125, 0.25, 0.0625], 1)
