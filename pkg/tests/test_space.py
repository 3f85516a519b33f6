import numpy as np
import pytest

from stokes_stab import mesh as msh
from stokes_stab.space import (ElementPair, FeSpace, P1P1, P2P1, SpaceError,
                               interpolate, physical_points,
                               pressure_gradients, pressure_values,
                               scalar_basis, velocity_gradients,
                               velocity_stress_laplacian, velocity_values)


def test_element_pair_labels():
    assert ElementPair.from_label("P1P1") == P1P1
    assert ElementPair.from_label("P2P1") == P2P1
    assert P2P1.label == "P2P1"
    with pytest.raises(SpaceError):
        ElementPair.from_label("P3P2")
    with pytest.raises(SpaceError):
        ElementPair(3, 1)
    with pytest.raises(SpaceError):
        ElementPair(2, 2)


def test_basis_partition_of_unity():
    pts = np.random.default_rng(0).random((40, 2)) * 0.5
    for deg in (1, 2):
        val, grad, _ = scalar_basis(deg, pts)
        assert np.allclose(val.sum(axis=-1), 1.0)
        assert np.allclose(grad.sum(axis=-2), 0.0)


def test_basis_kronecker_at_nodes():
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    val, _, _ = scalar_basis(1, corners)
    assert np.allclose(val, np.eye(3))
    mids = np.array([[0.5, 0.5], [0.0, 0.5], [0.5, 0.0]])
    val, _, _ = scalar_basis(2, np.vstack([corners, mids]))
    assert np.allclose(val, np.eye(6), atol=1e-14)


def test_p2_corner_hessian():
    # the corner function at the origin is (1-x-y)(1-2x-2y); its
    # Hessian is the constant matrix [[4,4],[4,4]]
    _, _, hess = scalar_basis(2, np.array([[0.3, 0.1], [0.0, 0.0]]))
    assert np.allclose(hess[:, 0], [[4.0, 4.0], [4.0, 4.0]])


def test_basis_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    pts = rng.random((10, 2)) * 0.4 + 0.05
    eps = 1e-6
    for deg in (1, 2):
        val, grad, hess = scalar_basis(deg, pts)
        for axis in range(2):
            shift = np.zeros(2)
            shift[axis] = eps
            vp, gp, _ = scalar_basis(deg, pts + shift)
            vm, gm, _ = scalar_basis(deg, pts - shift)
            assert np.allclose((vp - vm) / (2 * eps), grad[..., axis],
                               atol=1e-8)
            assert np.allclose((gp - gm) / (2 * eps), hess[..., axis],
                               atol=1e-8)


def test_space_dof_counts():
    m = msh.unit_square(2)
    s1 = FeSpace(m, "P1P1")
    assert s1.n_u == 2 * m.n_vertices
    assert s1.n_p == m.n_vertices
    s2 = FeSpace(m, "P2P1")
    assert s2.n_nodes == m.n_vertices + m.n_edges
    assert s2.n_u == 2 * s2.n_nodes
    assert s2.n_p == m.n_vertices
    assert s2.n_dofs == s2.n_u + s2.n_p


def test_dirichlet_dofs_follow_tags():
    m = msh.unit_square(2, boundary={"right": "N"})
    for pair in ("P1P1", "P2P1"):
        s = FeSpace(m, pair)
        coords = s.node_coords[s.dirichlet_nodes]
        interior_right = (np.isclose(coords[:, 0], 1.0)
                          & (coords[:, 1] > 1e-12)
                          & (coords[:, 1] < 1 - 1e-12))
        assert not interior_right.any()
        # every dirichlet node actually sits on the boundary
        on_bnd = (np.isclose(coords[:, 0], 0.0) | np.isclose(coords[:, 0], 1.0)
                  | np.isclose(coords[:, 1], 0.0)
                  | np.isclose(coords[:, 1], 1.0))
        assert on_bnd.all()
        assert len(s.dirichlet_dofs) == 2 * len(s.dirichlet_nodes)


def test_interpolation_reproduces_polynomials():
    m = msh.unit_square(3)
    rng = np.random.default_rng(2)
    ref = rng.random((6, 2)) * 0.4 + 0.05
    xy = physical_points(m, ref)
    x, y = xy[..., 0], xy[..., 1]

    s = FeSpace(m, "P2P1")
    u = lambda X, Y: np.stack([X**2 + Y, X * Y - 3.0], axis=-1)
    p = lambda X, Y: 1.0 + 2.0 * X - Y
    uc, pc = interpolate(s, u=u, p=p)
    assert np.allclose(velocity_values(s, uc, ref), u(x, y))
    grads = velocity_gradients(s, uc, ref)
    assert np.allclose(grads[..., 0, 0], 2 * x)
    assert np.allclose(grads[..., 0, 1], 1.0)
    assert np.allclose(grads[..., 1, 0], y)
    assert np.allclose(grads[..., 1, 1], x)
    assert np.allclose(pressure_values(s, pc, ref), p(x, y))
    pg = pressure_gradients(s, pc, ref)
    assert np.allclose(pg[..., 0], 2.0) and np.allclose(pg[..., 1], -1.0)

    s1 = FeSpace(m, "P1P1")
    u1 = lambda X, Y: np.stack([1 + X - 2 * Y, 3 * Y], axis=-1)
    uc1, _ = interpolate(s1, u=u1)
    assert np.allclose(velocity_values(s1, uc1, ref), u1(x, y))


def test_stress_laplacian_oracle():
    # u = (x^2 + y, x*y): component Hessians [[2,0],[0,0]] and
    # [[0,1],[1,0]], so div D(u) = (2 + 1/2, 0)
    m = msh.unit_square(2)
    s = FeSpace(m, "P2P1")
    uc, _ = interpolate(s, u=lambda X, Y: np.stack([X**2 + Y, X * Y],
                                                   axis=-1))
    ref = np.array([[1 / 3, 1 / 3], [0.2, 0.3]])
    Au = velocity_stress_laplacian(s, uc, ref)
    assert np.allclose(Au[..., 0], 2.5)
    assert np.allclose(Au[..., 1], 0.0, atol=1e-12)
    # P1 velocity has no second derivatives
    s1 = FeSpace(m, "P1P1")
    uc1, _ = interpolate(s1, u=lambda X, Y: np.stack([X, Y], axis=-1))
    assert np.allclose(velocity_stress_laplacian(s1, uc1, ref), 0.0)


def test_dof_continuity_across_edges():
    # evaluating from either side of every interior edge must agree
    rng = np.random.default_rng(5)
    m = msh.unit_square(2).refine_marked([0, 3]).refine_uniform()
    ts = np.array([0.21, 0.5, 0.87])
    for pair in ("P1P1", "P2P1"):
        s = FeSpace(m, pair)
        interior = np.flatnonzero(m.edge_tags == 0)
        coefs = rng.standard_normal((100, s.n_u))
        for e in interior:
            k0, k1 = m.e2t[e]
            vals = []
            for k in (k0, k1):
                tri = m.triangles[k]
                loc_a = int(np.flatnonzero(tri == m.edges[e, 0])[0])
                loc_b = int(np.flatnonzero(tri == m.edges[e, 1])[0])
                ref = (msh.REF_VERTICES[loc_a][None] * (1 - ts[:, None])
                       + msh.REF_VERTICES[loc_b][None] * ts[:, None])
                v = np.stack([velocity_values(s, c, ref, elems=[k])[0]
                              for c in coefs])
                vals.append(v)
            assert np.allclose(vals[0], vals[1], atol=1e-12)


def test_interpolate_rejects_bad_shapes():
    s = FeSpace(msh.unit_square(1), "P1P1")
    with pytest.raises(SpaceError):
        interpolate(s, u=lambda x, y: x)
    with pytest.raises(SpaceError):
        interpolate(s, p=lambda x, y: np.stack([x, y], axis=-1))
