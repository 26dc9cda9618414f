import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from friedlab import mesh as meshlib
from friedlab.errors import BadParameter, ParseError


def test_square_half():
    m = meshlib.generate("square", 0.5)
    assert (m.n_vertices, m.n_triangles, len(m.boundary_edges)) == (9, 8, 8)


@pytest.mark.parametrize("h", [0.5, 0.25, 0.1, 1 / 16])
def test_lshape_area_and_perimeter(h):
    m = meshlib.generate("lshape", h)
    assert abs(m.area - 0.75) < 1e-12
    assert abs(meshlib.boundary_measure(m) - 4.0) < 1e-12


def test_disk_polygon_geometry():
    m = meshlib.generate("disk_polygon", 0.125, sides=16)
    assert abs(m.area - 8 * math.sin(math.pi / 8)) < 1e-12
    assert abs(meshlib.boundary_measure(m) - 32 * math.sin(math.pi / 16)) < 1e-12


def test_square_perimeter():
    assert abs(meshlib.boundary_measure(meshlib.generate("square", 0.1)) - 4) < 1e-12


@pytest.mark.parametrize("domain", meshlib.DOMAINS)
@pytest.mark.parametrize("h", [0.5, 0.2, 1 / 16])
def test_generated_meshes_valid(domain, h):
    m = meshlib.generate(domain, h)
    assert meshlib.validate(m) == []
    assert meshlib.euler_characteristic(m) == 1
    assert m.hmax <= 2 * h


@pytest.mark.parametrize("domain", meshlib.DOMAINS)
def test_no_triangle_with_three_boundary_vertices(domain):
    # such triangles carry no interior velocity dof and spoil inf-sup stability
    m = meshlib.generate(domain, 0.125)
    bv = set(m.boundary_vertices.tolist())
    assert not any(all(v in bv for v in t) for t in m.triangles.tolist())


def test_refine_counts():
    m = meshlib.generate("square", 0.5)
    r = meshlib.refine(m)
    assert r.n_triangles == 32
    assert len(r.boundary_edges) == 2 * len(m.boundary_edges)
    assert abs(r.area - m.area) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(meshlib.DOMAINS), st.floats(0.12, 0.6), st.integers(6, 20))
def test_refine_preserves_invariants(domain, h, sides):
    m = meshlib.generate(domain, h, sides)
    r = meshlib.refine(m)
    assert meshlib.validate(r) == []
    assert abs(r.area - m.area) < 1e-12
    assert abs(meshlib.boundary_measure(r) - meshlib.boundary_measure(m)) < 1e-12
    assert meshlib.euler_characteristic(r) == 1
    # children 4t..4t+3 cover their parent
    np.testing.assert_allclose(r.signed_areas.reshape(-1, 4).sum(axis=1), m.signed_areas, rtol=1e-12)


def test_validate_detects_swapped_triangle():
    m = meshlib.generate("square", 0.5)
    tris = m.triangles.copy()
    tris[3, [1, 2]] = tris[3, [2, 1]]
    bad = meshlib.Mesh(m.vertices, tris, m.boundary_edges)
    assert any("negative-area" in p for p in meshlib.validate(bad))


def test_validate_detects_reversed_boundary_edge():
    m = meshlib.generate("square", 0.5)
    be = m.boundary_edges.copy()
    be[2] = be[2, ::-1]
    bad = meshlib.Mesh(m.vertices, m.triangles, be)
    assert any("normal-orientation" in p for p in meshlib.validate(bad))


def test_normals_outward_on_square():
    m = meshlib.generate("square", 0.25)
    mid = m.vertices[m.boundary_edges].mean(axis=1)
    np.testing.assert_allclose(np.sum(m.normals * (mid - 0.5), axis=1) > 0, True)
    np.testing.assert_allclose(np.sum(m.edge_lengths[:, None] * m.normals, axis=0), 0, atol=1e-14)


def test_bad_parameters():
    with pytest.raises(BadParameter):
        meshlib.generate("square", 0)
    with pytest.raises(BadParameter):
        meshlib.generate("square", -1)
    with pytest.raises(BadParameter):
        meshlib.generate("disk_polygon", 0.2, sides=5)
    with pytest.raises(BadParameter):
        meshlib.generate("circle", 0.2)


def test_save_load_roundtrip(tmp_path):
    m = meshlib.generate("disk_polygon", 0.3, sides=7)
    path = tmp_path / "m.json"
    meshlib.save(m, path)
    r = meshlib.load(path)
    assert np.array_equal(r.vertices, m.vertices)  # bitwise
    assert np.array_equal(r.triangles, m.triangles)
    assert np.array_equal(r.boundary_edges, m.boundary_edges)
    assert meshlib.fingerprint(r) == meshlib.fingerprint(m)


def test_load_missing_key():
    m = meshlib.generate("square", 0.5)
    d = m.to_dict()
    del d["triangles"]
    with pytest.raises(ParseError, match="triangles"):
        meshlib.loads(json.dumps(d))


def test_load_non_integer_index():
    d = meshlib.generate("square", 0.5).to_dict()
    d["triangles"][3][1] = 1.5
    with pytest.raises(ParseError, match=r"triangles\[3\]\[1\]"):
        meshlib.loads(json.dumps(d))


def test_load_syntax_error_reports_line():
    text = meshlib.dumps(meshlib.generate("square", 0.5)).replace("[0, 1]", "[0 1]", 1)
    with pytest.raises(ParseError, match="line"):
        meshlib.loads(text)
