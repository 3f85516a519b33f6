"""Finite element spaces on triangle meshes.

Velocity is vector-valued continuous Lagrange of degree 1 or 2,
pressure is continuous piecewise linear. Velocity degrees of freedom
are interleaved (node 0 x, node 0 y, node 1 x, ...) and come before the
pressure block in the global ordering.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import DIRICHLET


class SpaceError(Exception):
    pass


@dataclass(frozen=True)
class ElementPair:
    """Velocity/pressure polynomial degrees, e.g. P1P1 or P2P1."""

    velocity_degree: int
    pressure_degree: int = 1

    def __post_init__(self):
        if self.velocity_degree not in (1, 2):
            raise SpaceError(
                f"velocity degree must be 1 or 2, got {self.velocity_degree}")
        if self.pressure_degree != 1:
            raise SpaceError(
                f"pressure degree must be 1, got {self.pressure_degree}")

    @property
    def label(self):
        return f"P{self.velocity_degree}P{self.pressure_degree}"

    @staticmethod
    def from_label(label):
        if label == "P1P1":
            return ElementPair(1, 1)
        if label == "P2P1":
            return ElementPair(2, 1)
        raise SpaceError(f"unknown element pair {label!r}; "
                         "expected P1P1 or P2P1")


P1P1 = ElementPair(1, 1)
P2P1 = ElementPair(2, 1)


def scalar_basis(degree, pts):
    """Reference-triangle Lagrange basis at pts (..., 2).

    Returns (values, gradients, hessians) with shapes (..., nbf),
    (..., nbf, 2) and (..., nbf, 2, 2). Basis order: the three corner
    functions, then for degree 2 the midpoint function of the edge
    opposite each corner.
    """
    pts = np.asarray(pts, dtype=float)
    x = pts[..., 0]
    y = pts[..., 1]
    lam = np.stack([1.0 - x - y, x, y], axis=-1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    base = pts.shape[:-1]

    if degree == 1:
        val = lam
        grad = np.broadcast_to(dlam, base + (3, 2)).copy()
        hess = np.zeros(base + (3, 2, 2))
        return val, grad, hess

    if degree == 2:
        val = np.empty(base + (6,))
        grad = np.empty(base + (6, 2))
        hess = np.empty(base + (6, 2, 2))
        for i in range(3):
            li = lam[..., i]
            val[..., i] = li * (2.0 * li - 1.0)
            grad[..., i, :] = (4.0 * li - 1.0)[..., None] * dlam[i]
            hess[..., i, :, :] = 4.0 * np.outer(dlam[i], dlam[i])
            j, k = (i + 1) % 3, (i + 2) % 3
            val[..., 3 + i] = 4.0 * lam[..., j] * lam[..., k]
            grad[..., 3 + i, :] = 4.0 * (lam[..., k][..., None] * dlam[j]
                                         + lam[..., j][..., None] * dlam[k])
            hess[..., 3 + i, :, :] = 4.0 * (np.outer(dlam[j], dlam[k])
                                            + np.outer(dlam[k], dlam[j]))
        return val, grad, hess

    raise SpaceError(f"unsupported basis degree {degree}")


class FeSpace:
    """Velocity/pressure space pair on a mesh.

    Velocity dof 2*s+c is component c at scalar node s; scalar nodes
    are the mesh vertices, followed for P2 by one node per edge.
    Pressure dof j (offset by n_u globally) sits at vertex j.
    """

    def __init__(self, mesh, pair):
        if isinstance(pair, str):
            pair = ElementPair.from_label(pair)
        self.mesh = mesh
        self.pair = pair
        nv = mesh.n_vertices

        if pair.velocity_degree == 1:
            self.node_coords = mesh.vertices
            self.elem_nodes = mesh.triangles
        else:
            mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]]
                          + mesh.vertices[mesh.edges[:, 1]])
            self.node_coords = np.vstack([mesh.vertices, mids])
            self.elem_nodes = np.hstack([mesh.triangles, nv + mesh.t2e])

        self.n_nodes = len(self.node_coords)
        self.n_u = 2 * self.n_nodes
        self.n_p = nv
        self.n_dofs = self.n_u + self.n_p

        d_edges = np.flatnonzero(mesh.edge_tags == DIRICHLET)
        nodes = set(mesh.edges[d_edges].ravel().tolist())
        if pair.velocity_degree == 2:
            nodes.update((nv + d_edges).tolist())
        nodes = np.array(sorted(nodes), dtype=np.int64)
        self.dirichlet_nodes = nodes
        self.dirichlet_dofs = np.sort(
            np.concatenate([2 * nodes, 2 * nodes + 1]))

    @property
    def n_basis(self):
        return self.elem_nodes.shape[1]

    @cached_property
    def free_velocity_dofs(self):
        mask = np.ones(self.n_u, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)

    def local_velocity_coefs(self, coefs, elems=None):
        """(ne, nbf, 2) view of a velocity coefficient vector."""
        en = self.elem_nodes if elems is None else self.elem_nodes[elems]
        return np.asarray(coefs).reshape(-1, 2)[en]

    def local_pressure_coefs(self, coefs, elems=None):
        tri = self.mesh.triangles if elems is None \
            else self.mesh.triangles[elems]
        return np.asarray(coefs)[tri]


def build_space(mesh, pair):
    return FeSpace(mesh, pair)


# ----------------------------------------------------------------------
# evaluation of discrete fields at reference points
#
# ref_pts is (nq, 2), shared by all elements; elems selects a subset of
# triangles (default all). Physical derivatives come from the affine
# pullback: grad_x = J^{-T} grad_ref, hess_x = J^{-T} hess_ref J^{-1}.

def physical_points(mesh, ref_pts, elems=None):
    J = mesh.jacobians if elems is None else mesh.jacobians[elems]
    c = mesh.corner_coords if elems is None else mesh.corner_coords[elems]
    return c[:, None, 0, :] + np.einsum("eab,qb->eqa", J, ref_pts)


def _phys_grads(space, ref_pts, elems=None):
    _, gref, _ = scalar_basis(space.pair.velocity_degree, ref_pts)
    it = space.mesh.inv_jacobians_t
    if elems is not None:
        it = it[elems]
    return np.einsum("eba,qia->eqib", it, gref)


def _phys_hess(space, ref_pts, elems=None):
    _, _, href = scalar_basis(space.pair.velocity_degree, ref_pts)
    it = space.mesh.inv_jacobians_t
    if elems is not None:
        it = it[elems]
    return np.einsum("eca,qiab,edb->eqicd", it, href, it)


def velocity_values(space, coefs, ref_pts, elems=None):
    """(ne, nq, 2) values of the discrete velocity."""
    val, _, _ = scalar_basis(space.pair.velocity_degree, ref_pts)
    lc = space.local_velocity_coefs(coefs, elems)
    return np.einsum("qi,eic->eqc", val, lc)


def velocity_gradients(space, coefs, ref_pts, elems=None):
    """(ne, nq, 2, 2) gradients; [..., c, b] is d u_c / d x_b."""
    g = _phys_grads(space, ref_pts, elems)
    lc = space.local_velocity_coefs(coefs, elems)
    return np.einsum("eqib,eic->eqcb", g, lc)


def velocity_stress_laplacian(space, coefs, ref_pts, elems=None):
    """(ne, nq, 2) values of div D(u_h), D the symmetric gradient.

    Componentwise, with H^c the Hessian of velocity component c:
    row 1 is H^1_xx + (H^1_yy + H^2_xy)/2, row 2 symmetric. Identically
    zero for P1 velocity.
    """
    H = _phys_hess(space, ref_pts, elems)
    lc = space.local_velocity_coefs(coefs, elems)
    Hu = np.einsum("eqiab,eic->eqcab", H, lc)
    out = np.empty(Hu.shape[:2] + (2,))
    out[..., 0] = Hu[..., 0, 0, 0] + 0.5 * (Hu[..., 0, 1, 1]
                                            + Hu[..., 1, 0, 1])
    out[..., 1] = Hu[..., 1, 1, 1] + 0.5 * (Hu[..., 1, 0, 0]
                                            + Hu[..., 0, 0, 1])
    return out


def pressure_values(space, coefs, ref_pts, elems=None):
    val, _, _ = scalar_basis(1, ref_pts)
    lc = space.local_pressure_coefs(coefs, elems)
    return np.einsum("qi,ei->eq", val, lc)


def pressure_gradients(space, coefs, ref_pts, elems=None):
    _, gref, _ = scalar_basis(1, ref_pts)
    it = space.mesh.inv_jacobians_t
    if elems is not None:
        it = it[elems]
    g = np.einsum("eba,qia->eqib", it, gref)
    lc = space.local_pressure_coefs(coefs, elems)
    return np.einsum("eqib,ei->eqb", g, lc)


def interpolate(space, u=None, p=None):
    """Nodal interpolation of callables onto the space.

    u maps coordinate arrays (x, y) to an (m, 2) array, p to (m,).
    Returns the pair (velocity coefficients, pressure coefficients),
    with None for fields not given.
    """
    ucoef = pcoef = None
    if u is not None:
        x, y = space.node_coords[:, 0], space.node_coords[:, 1]
        vals = np.asarray(u(x, y), dtype=float)
        if vals.shape != (space.n_nodes, 2):
            raise SpaceError(f"u must return shape {(space.n_nodes, 2)}, "
                             f"got {vals.shape}")
        ucoef = vals.reshape(-1)
    if p is not None:
        v = space.mesh.vertices
        pcoef = np.asarray(p(v[:, 0], v[:, 1]), dtype=float)
        if pcoef.shape != (space.n_p,):
            raise SpaceError(f"p must return shape {(space.n_p,)}, "
                             f"got {pcoef.shape}")
    return ucoef, pcoef
