import numpy as np
import pytest

from stokes_stab.mesh import (DIRICHLET, INTERIOR, NEUMANN, MeshError,
                              MeshFormatError, TriMesh, generate_structured,
                              l_shape, unit_square)


def dirichlet_segments(mesh):
    idx = np.flatnonzero(mesh.edge_tags == DIRICHLET)
    return mesh.vertices[mesh.edges[idx]]


def test_unit_square_counts():
    m = unit_square(1)
    assert (m.n_vertices, m.n_triangles) == (4, 2)
    m = unit_square(2)
    assert (m.n_vertices, m.n_triangles) == (9, 8)
    for n in (1, 2, 5):
        m = unit_square(n)
        assert m.n_triangles == 2 * n * n
        assert np.isclose(m.areas.sum(), 1.0)


def test_l_shape_counts_and_area():
    m = l_shape(2)
    assert (m.n_vertices, m.n_triangles) == (8, 6)
    assert np.isclose(m.areas.sum(), 3.0)
    m = l_shape(4)
    assert m.n_triangles == 24
    assert np.isclose(m.areas.sum(), 3.0)
    assert m.audit().ok


def test_l_shape_rejects_odd_n():
    with pytest.raises(MeshError):
        l_shape(3)
    with pytest.raises(MeshError):
        l_shape(1)


def test_generate_structured_dispatch():
    assert generate_structured("unit_square", 2).n_triangles == 8
    assert generate_structured("l_shape", 2).n_triangles == 6
    with pytest.raises(MeshError):
        generate_structured("disk", 2)


def test_orientation_and_refinement_edge_is_longest():
    for m in (unit_square(3), l_shape(2)):
        assert np.all(m.signed_areas > 0)
        c = m.corner_coords
        e01 = np.linalg.norm(c[:, 1] - c[:, 0], axis=1)
        assert np.allclose(e01, m.diameters)


def test_boundary_side_tags():
    m = unit_square(2, boundary={"right": "N"})
    mids = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
    on_right = np.isclose(mids[:, 0], 1.0)
    assert np.all(m.edge_tags[on_right] == NEUMANN)
    tagged = m.edge_tags != INTERIOR
    assert np.all(m.edge_tags[tagged & ~on_right] == DIRICHLET)
    with pytest.raises(MeshError):
        unit_square(2, boundary={"diagonal": "N"})


def test_construction_rejects_bad_input():
    m = unit_square(1)
    with pytest.raises(MeshError):
        TriMesh(m.vertices, m.triangles, {})  # untagged boundary
    with pytest.raises(MeshError):
        TriMesh(m.vertices, m.triangles,
                {k: "N" for k in m.boundary_tag_dict()})  # no Dirichlet part
    with pytest.raises(MeshError):
        TriMesh(m.vertices, np.array([[0, 1, 9]]), m.boundary_tag_dict())
    flipped = m.triangles.copy()
    flipped[0] = flipped[0][[1, 0, 2]]
    with pytest.raises(MeshError):
        TriMesh(m.vertices, flipped, m.boundary_tag_dict())


def test_immutability():
    m = unit_square(2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 7.0
    with pytest.raises(ValueError):
        m.triangles[0, 0] = 3


def test_element_geometry():
    m = unit_square(2)
    g = m.element_geometry(0)
    assert np.isclose(g.area, 1.0 / 8.0)
    assert np.isclose(g.diameter, np.sqrt(2) / 2)
    assert np.allclose(g.jacobian @ g.inv_jacobian_t.T, np.eye(2))
    # gradient pushforward consistency: affine map reproduces corners
    x = g.vertices[0] + g.jacobian @ np.array([1.0, 0.0])
    assert np.allclose(x, g.vertices[1])


def test_refine_uniform_counts_and_similarity():
    m = unit_square(2)
    r = m.refine_uniform()
    assert r.n_triangles == 4 * m.n_triangles
    assert r.n_vertices == m.n_vertices + m.n_edges
    assert np.isclose(r.areas.sum(), m.areas.sum())
    assert np.allclose(r.areas, m.areas[r.parents] / 4)
    # children are similar to parents: angle set unchanged
    assert np.isclose(r.min_angle_deg, m.min_angle_deg)
    assert r.audit().ok


def test_refine_marked_empty_is_identity():
    m = unit_square(2)
    r = m.refine_marked([])
    assert r.n_triangles == m.n_triangles
    assert r.n_vertices == m.n_vertices


def test_refine_marked_bisects_and_conforms():
    m = unit_square(2)
    r = m.refine_marked([0])
    # the neighbor across the shared refinement edge is forced too
    assert r.n_triangles == m.n_triangles + 2
    assert np.isclose(r.areas.sum(), m.areas.sum())
    for k in np.flatnonzero(r.parents == 0):
        assert r.areas[k] < m.areas[0]
    assert r.audit().ok


def test_refine_marked_closure_terminates_and_conforms():
    rng = np.random.default_rng(7)
    m = unit_square(2, boundary={"top": "N"})
    for _ in range(10):
        marked = rng.random(m.n_triangles) < 0.35
        m = m.refine_marked(marked)
        assert m.audit(min_angle_deg=20.0).ok
    assert np.isclose(m.areas.sum(), 1.0)
    # right isoceles bisection preserves the shape class exactly
    assert m.min_angle_deg > 44.9


def test_boundary_tags_inherited():
    m = unit_square(2, boundary={"right": "N", "top": "N"})
    for r in (m.refine_uniform(), m.refine_marked([0, 3, 5])):
        mids = 0.5 * (r.vertices[r.edges[:, 0]] + r.vertices[r.edges[:, 1]])
        tagged = r.edge_tags != INTERIOR
        on_n = np.isclose(mids[:, 0], 1.0) | np.isclose(mids[:, 1], 1.0)
        assert np.all(r.edge_tags[tagged & on_n] == NEUMANN)
        assert np.all(r.edge_tags[tagged & ~on_n] == DIRICHLET)


def test_dirichlet_trace_preserved():
    m = l_shape(2, boundary=lambda x, y: "N" if np.isclose(x, 1.0) else "D")
    r = m.refine_uniform().refine_marked([1, 2, 8])
    seg0 = dirichlet_segments(m)
    seg1 = dirichlet_segments(r)
    len0 = np.linalg.norm(seg0[:, 1] - seg0[:, 0], axis=1).sum()
    len1 = np.linalg.norm(seg1[:, 1] - seg1[:, 0], axis=1).sum()
    assert np.isclose(len0, len1)
    # each refined Dirichlet edge lies inside some coarse Dirichlet edge
    for a, b in seg1:
        mid = 0.5 * (a + b)
        d = seg0[:, 1] - seg0[:, 0]
        t = np.einsum("sd,sd->s", mid - seg0[:, 0], d) / \
            np.einsum("sd,sd->s", d, d)
        perp = mid - seg0[:, 0] - t[:, None] * d
        hit = (np.hypot(perp[:, 0], perp[:, 1]) < 1e-12) \
            & (t > -1e-12) & (t < 1 + 1e-12)
        assert hit.any()


def test_audit_detects_clockwise_triangle():
    m = unit_square(2)
    t = m.triangles.copy()
    t[3] = t[3][[1, 0, 2]]
    bad = TriMesh(m.vertices, t, m.boundary_tag_dict(), validate=False)
    rep = bad.audit()
    assert not rep.ok
    ok, issues = rep.checks["orientation"]
    assert not ok and "triangle 3" in issues[0]


def test_audit_detects_hanging_node():
    m = unit_square(1)
    v = np.vstack([m.vertices, [[0.5, 0.5]]])
    # split only one of the two triangles sharing the diagonal
    t = np.array([[3, 0, 1], [0, 4, 2], [4, 3, 2]])
    bad = TriMesh(v, t, m.boundary_tag_dict(), validate=False)
    rep = bad.audit()
    ok, issues = rep.checks["conformity"]
    assert not ok
    assert any("hangs" in msg for msg in issues)


def test_audit_detects_duplicate_vertex():
    m = unit_square(1)
    v = np.vstack([m.vertices, m.vertices[3:4]])
    t = m.triangles.copy()
    t[1][t[1] == 3] = 4
    bad = TriMesh(v, t, {}, validate=False)
    rep = bad.audit()
    assert not rep.checks["conformity"][0]


def test_audit_reports_min_angle():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.01]])
    m = TriMesh(v, [[0, 1, 2]], {(0, 1): "D", (1, 2): "D", (0, 2): "D"})
    rep = m.audit(min_angle_deg=10.0)
    assert not rep.checks["min_angle"][0]
    assert "FAIL" in str(rep)


def test_audit_passes_on_generated_meshes():
    rng = np.random.default_rng(3)
    m = l_shape(2)
    for _ in range(6):
        m = m.refine_marked(rng.random(m.n_triangles) < 0.4)
    assert m.audit(min_angle_deg=20.0).ok


def test_file_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    m = unit_square(2, boundary={"left": "N"})
    for _ in range(5):
        m = m.refine_marked(rng.random(m.n_triangles) < 0.4)
    path = tmp_path / "mesh.txt"
    m.write(path)
    back = TriMesh.read(path)
    assert np.array_equal(back.triangles, m.triangles)
    assert np.array_equal(back.vertices, m.vertices)  # exact, via repr
    assert back.boundary_tag_dict() == m.boundary_tag_dict()


@pytest.mark.parametrize("content,fragment", [
    ("trimeshv1\n", "header"),
    ("trimesh v1\nvertices 2\n0 0\n1 junk\n", "line 4"),
    ("trimesh v1\nvertices 1\n0 0\ntriangles 1\n0 0\n", "line 5"),
    ("trimesh v1\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 5\n",
     "out of range"),
    ("trimesh v1\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\n"
     "boundary 1\n0 1 X\n", "D or N"),
    ("trimesh v1\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\n"
     "boundary 3\n0 1 D\n1 2 D\n0 2 D\nextra\n", "trailing"),
])
def test_read_rejects_malformed(tmp_path, content, fragment):
    path = tmp_path / "bad.txt"
    path.write_text(content)
    with pytest.raises(MeshFormatError) as err:
        TriMesh.read(path)
    assert fragment in str(err.value)


def test_read_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("trimesh v1\nvertices 2\n0 0\n1 junk\n")
    with pytest.raises(MeshFormatError, match="line 4"):
        TriMesh.read(path)
