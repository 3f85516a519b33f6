"""Assembly of the stabilized Stokes system.

The discrete problem is: find (u, p) with

    B(u, p; v, q) - alpha * S(u, p; v, q) = F(v, q) - alpha * L(v, q)

for all test pairs (v, q), where B is the symmetric mixed Stokes form

    B(w, r; v, q) = (D(w), D(v)) - (div v, r) - (div w, q),

D the symmetric gradient, and S the element-residual stabilization

    S(w, r; v, q) = sum_K h_K^2 (-div D(w) + grad r, -div D(v) + grad q)_K,
    L(v, q)       = sum_K h_K^2 (f, -div D(v) + grad q)_K.

With 0 < alpha < C_I (the inverse-inequality constant of the velocity
space) the stabilized form is coercive in the seminorm
||D(w)||^2 + alpha * sum_K h_K^2 ||grad r||_K^2, which is what makes
equal-order pairs such as P1P1 solvable. The sign convention keeps the
whole system symmetric (indefinite), so the pressure-pressure block is
-alpha * sum_K h_K^2 (grad r, grad q)_K.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi

from .space import FeSpace, interpolate, physical_points, scalar_basis


class InadmissibleAlphaError(Exception):
    """Stabilization parameter at or above the inverse-inequality bound."""


@dataclass(frozen=True)
class QuadRule:
    """Quadrature on the reference triangle; weights sum to 1/2."""

    degree: int
    points: np.ndarray   # (nq, 2)
    weights: np.ndarray  # (nq,)


@lru_cache(maxsize=None)
def quadrature(degree):
    """Positive-weight rule exact for polynomials up to `degree` (1..10).

    Conical product construction: Gauss-Legendre in the first collapsed
    coordinate times Gauss-Jacobi (weight 1-b) in the second, mapped by
    (a, b) -> (a(1-b), b). Every weight is positive at every degree.
    """
    if not isinstance(degree, (int, np.integer)):
        raise ValueError(f"quadrature degree must be an int, got {degree!r}")
    if not 1 <= degree <= 10:
        raise ValueError(f"quadrature degree must be in 1..10, got {degree}")
    m = (degree + 2) // 2
    xg, wg = np.polynomial.legendre.leggauss(m)
    a = 0.5 * (xg + 1.0)
    wa = 0.5 * wg
    xj, wj = roots_jacobi(m, 1.0, 0.0)
    b = 0.5 * (xj + 1.0)
    wb = 0.25 * wj
    A, B = np.meshgrid(a, b, indexing="ij")
    pts = np.column_stack([(A * (1.0 - B)).ravel(), B.ravel()])
    w = np.outer(wa, wb).ravel()
    pts.flags.writeable = False
    w.flags.writeable = False
    return QuadRule(degree, pts, w)


@lru_cache(maxsize=None)
def edge_quadrature(degree):
    """Gauss-Legendre rule on [0, 1]; weights sum to 1."""
    if not 1 <= degree <= 20:
        raise ValueError(f"edge quadrature degree must be in 1..20, "
                         f"got {degree}")
    m = (degree + 2) // 2
    x, w = np.polynomial.legendre.leggauss(m)
    pts = 0.5 * (x + 1.0)
    w = 0.5 * w
    pts.flags.writeable = False
    w.flags.writeable = False
    return pts, w


# ----------------------------------------------------------------------
# problem data

@dataclass(frozen=True)
class ExactSolution:
    """Closed-form reference fields for error measurement."""

    u: callable          # (x, y) -> (m, 2)
    grad_u: callable     # (x, y) -> (m, 2, 2), [c, b] = d u_c / d x_b
    p: callable          # (x, y) -> (m,)


@dataclass(frozen=True)
class StokesProblem:
    """Data of one Stokes boundary value problem.

    f is the body force, g the divergence constraint right-hand side
    (None means 0), t the traction on the Neumann part (None means 0),
    alpha the stabilization parameter (None picks the space default).
    u_d supplies Dirichlet velocity values; when absent, exact.u is
    used if available and zero otherwise.
    """

    f: callable
    g: callable = None
    t: callable = None
    alpha: float = None
    exact: ExactSolution = None
    u_d: callable = None

    def dirichlet_data(self):
        if self.u_d is not None:
            return self.u_d
        if self.exact is not None:
            return self.exact.u
        return None


# ----------------------------------------------------------------------
# local assembly pieces

def _velocity_dofs(space, elems=None):
    en = space.elem_nodes if elems is None else space.elem_nodes[elems]
    out = np.empty((len(en), 2 * en.shape[1]), dtype=np.int64)
    out[:, 0::2] = 2 * en
    out[:, 1::2] = 2 * en + 1
    return out


def _phys_grads_at(space, pts):
    _, gref, _ = scalar_basis(space.pair.velocity_degree, pts)
    return np.einsum("eba,qia->eqib", space.mesh.inv_jacobians_t, gref)


def _stress_divergence_op(space, pts):
    """(nt, nq, nbf, 2, 2) action of div D on each vector basis function.

    Index [..., i, c, r] is component r of div D(phi_i e_c): for
    Hessian H of the scalar function, div D(phi e_0) =
    (H00 + H11/2, H01/2) and div D(phi e_1) = (H01/2, H00/2 + H11).
    """
    _, _, href = scalar_basis(space.pair.velocity_degree, pts)
    it = space.mesh.inv_jacobians_t
    H = np.einsum("eca,qiab,edb->eqicd", it, href, it)
    out = np.empty(H.shape[:3] + (2, 2))
    out[..., 0, 0] = H[..., 0, 0] + 0.5 * H[..., 1, 1]
    out[..., 0, 1] = 0.5 * H[..., 0, 1]
    out[..., 1, 0] = 0.5 * H[..., 0, 1]
    out[..., 1, 1] = 0.5 * H[..., 0, 0] + H[..., 1, 1]
    return out


def _pressure_grads(space, nq):
    _, gref, _ = scalar_basis(1, np.zeros((1, 2)))
    g = np.einsum("eba,ia->eib", space.mesh.inv_jacobians_t, gref[0])
    return np.broadcast_to(g[:, None], (len(g), nq, 3, 2))


def _scatter_matrix(rows, cols, vals, shape):
    r = np.broadcast_to(rows[:, :, None], vals.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], vals.shape).ravel()
    return sp.coo_matrix((vals.ravel(), (r, c)), shape=shape).tocsr()


def _scatter_vector(dofs, vals, n):
    out = np.zeros(n)
    np.add.at(out, dofs.ravel(), vals.ravel())
    return out


def assemble_B(space, quad_degree=None):
    """Mixed Stokes form blocks (A_uu, A_up).

    A_uu[a, b] = (D(phi_b), D(phi_a)); A_up[a, l] = -(div phi_a, psi_l).
    The full unstabilized matrix is [[A_uu, A_up], [A_up^T, 0]].
    """
    k = space.pair.velocity_degree
    rule = quadrature(quad_degree or max(2 * k, 2))
    w, pts = rule.weights, rule.points
    g = _phys_grads_at(space, pts)
    scale = 2.0 * space.mesh.areas
    nbf = space.n_basis

    t1 = np.einsum("q,eqib,eqjb->eij", w, g, g)
    t2 = np.einsum("q,eqid,eqjc->eijdc", w, g, g)
    loc = 0.5 * (np.einsum("eij,cd->eicjd", t1, np.eye(2))
                 + t2.transpose(0, 1, 4, 2, 3))
    loc = loc * scale[:, None, None, None, None]
    loc = loc.reshape(-1, 2 * nbf, 2 * nbf)

    vd = _velocity_dofs(space)
    A_uu = _scatter_matrix(vd, vd, loc, (space.n_u, space.n_u))

    pval, _, _ = scalar_basis(1, pts)
    div_loc = np.einsum("q,eqic,ql->eicl", w, g, pval)
    div_loc = -div_loc.reshape(-1, 2 * nbf, 3) * scale[:, None, None]
    A_up = _scatter_matrix(vd, space.mesh.triangles, div_loc,
                           (space.n_u, space.n_p))
    return A_uu, A_up


def assemble_Sh(space, quad_degree=None):
    """Element-residual stabilization matrix on velocity+pressure dofs.

    S[(v,q),(w,r)] = sum_K h_K^2 (-div D(w) + grad r,
                                  -div D(v) + grad q)_K,
    returned as one symmetric (n_u + n_p) square matrix.
    """
    k = space.pair.velocity_degree
    rule = quadrature(quad_degree or max(2 * k, 2))
    w, pts = rule.weights, rule.points
    Aop = _stress_divergence_op(space, pts)
    pg = _pressure_grads(space, len(pts))
    h2 = space.mesh.diameters ** 2
    scale = 2.0 * space.mesh.areas * h2
    nbf = space.n_basis
    nu, npr = space.n_u, space.n_p
    n = nu + npr

    vd = _velocity_dofs(space)
    pd = nu + space.mesh.triangles

    uu = np.einsum("q,eqicr,eqjdr->eicjd", w, Aop, Aop)
    uu = uu.reshape(-1, 2 * nbf, 2 * nbf) * scale[:, None, None]
    up = -np.einsum("q,eqicr,eqlr->eicl", w, Aop, pg)
    up = up.reshape(-1, 2 * nbf, 3) * scale[:, None, None]
    pp = np.einsum("q,eqlr,eqmr->elm", w, pg, pg) * scale[:, None, None]

    S = _scatter_matrix(vd, vd, uu, (n, n))
    S += _scatter_matrix(vd, pd, up, (n, n))
    S += _scatter_matrix(pd, vd, up.transpose(0, 2, 1), (n, n))
    S += _scatter_matrix(pd, pd, pp, (n, n))
    return S.tocsr()


def assemble_F(space, problem, quad_degree=None, edge_degree=None):
    """Load functional (f, v) + <t, v>_Neumann - (g, q)."""
    k = space.pair.velocity_degree
    rule = quadrature(quad_degree or min(2 * k + 2, 10))
    w, pts = rule.weights, rule.points
    mesh = space.mesh
    scale = 2.0 * mesh.areas
    n = space.n_u + space.n_p
    out = np.zeros(n)

    xy = physical_points(mesh, pts)
    fv = np.asarray(problem.f(xy[..., 0], xy[..., 1]), dtype=float)
    val, _, _ = scalar_basis(k, pts)
    fu = np.einsum("q,eqc,qi->eic", w, fv, val) * scale[:, None, None]
    vd = _velocity_dofs(space)
    np.add.at(out, vd.ravel(),
              fu.reshape(len(fu), -1).ravel())

    if problem.g is not None:
        gv = np.asarray(problem.g(xy[..., 0], xy[..., 1]), dtype=float)
        pval, _, _ = scalar_basis(1, pts)
        gp = -np.einsum("q,eq,ql->el", w, gv, pval) * scale[:, None]
        np.add.at(out, (space.n_u + mesh.triangles).ravel(), gp.ravel())

    if problem.t is not None and mesh.has_neumann:
        out[:space.n_u] += _neumann_load(space, problem.t, edge_degree)
    return out


def _neumann_load(space, traction, edge_degree=None):
    from .mesh import NEUMANN, REF_VERTICES
    k = space.pair.velocity_degree
    s, w = edge_quadrature(edge_degree or 2 * k + 2)
    mesh = space.mesh
    out = np.zeros(space.n_u)
    edges = np.flatnonzero(mesh.edge_tags == NEUMANN)
    if len(edges) == 0:
        return out
    elems = mesh.e2t[edges, 0]
    tri = mesh.triangles[elems]
    # local corner index of each edge endpoint inside its triangle
    loc_a = np.argmax(tri == mesh.edges[edges, 0][:, None], axis=1)
    loc_b = np.argmax(tri == mesh.edges[edges, 1][:, None], axis=1)
    ref = (REF_VERTICES[loc_a][:, None, :] * (1.0 - s)[None, :, None]
           + REF_VERTICES[loc_b][:, None, :] * s[None, :, None])
    val, _, _ = scalar_basis(k, ref)                       # (ne, nq, nbf)
    pa = mesh.vertices[mesh.edges[edges, 0]]
    pb = mesh.vertices[mesh.edges[edges, 1]]
    xy = pa[:, None, :] + s[None, :, None] * (pb - pa)[:, None, :]
    tv = np.asarray(traction(xy[..., 0], xy[..., 1]), dtype=float)
    length = mesh.edge_lengths[edges]
    loc = np.einsum("q,eqc,eqi->eic", w, tv, val) * length[:, None, None]
    vd = _velocity_dofs(space, elems)
    np.add.at(out, vd.ravel(), loc.reshape(len(loc), -1).ravel())
    return out


def assemble_Lh(space, problem, quad_degree=None):
    """Stabilization load sum_K h_K^2 (f, -div D(v) + grad q)_K."""
    k = space.pair.velocity_degree
    rule = quadrature(quad_degree or min(2 * k + 2, 10))
    w, pts = rule.weights, rule.points
    mesh = space.mesh
    scale = 2.0 * mesh.areas * mesh.diameters ** 2
    out = np.zeros(space.n_u + space.n_p)

    xy = physical_points(mesh, pts)
    fv = np.asarray(problem.f(xy[..., 0], xy[..., 1]), dtype=float)
    Aop = _stress_divergence_op(space, pts)
    lu = -np.einsum("q,eqr,eqicr->eic", w, fv, Aop) * scale[:, None, None]
    vd = _velocity_dofs(space)
    np.add.at(out, vd.ravel(), lu.reshape(len(lu), -1).ravel())

    pg = _pressure_grads(space, len(pts))
    lp = np.einsum("q,eqr,eqlr->el", w, fv, pg) * scale[:, None]
    np.add.at(out, (space.n_u + mesh.triangles).ravel(), lp.ravel())
    return out


def pressure_mass(space, quad_degree=2):
    """P1 pressure mass matrix (n_p x n_p)."""
    rule = quadrature(quad_degree)
    w, pts = rule.weights, rule.points
    val, _, _ = scalar_basis(1, pts)
    loc = np.einsum("q,ql,qm->lm", w, val, val)
    loc = loc[None] * (2.0 * space.mesh.areas)[:, None, None]
    tri = space.mesh.triangles
    return _scatter_matrix(tri, tri, loc, (space.n_p, space.n_p))


def velocity_scalar_mass(space, quad_degree=None):
    """Mass matrix of the scalar velocity node basis (n_nodes square)."""
    k = space.pair.velocity_degree
    rule = quadrature(quad_degree or 2 * k)
    w, pts = rule.weights, rule.points
    val, _, _ = scalar_basis(k, pts)
    loc = np.einsum("q,qi,qj->ij", w, val, val)
    loc = loc[None] * (2.0 * space.mesh.areas)[:, None, None]
    en = space.elem_nodes
    return _scatter_matrix(en, en, loc, (space.n_nodes, space.n_nodes))


# ----------------------------------------------------------------------
# inverse inequality constant

def inverse_inequality_pencils(space, quad_degree=None):
    """Per-element matrices (M_A, M_D) of the inverse inequality.

    For local velocity coefficients c, c^T M_A c = h_K^2 ||div D(v)||^2
    and c^T M_D c = ||D(v)||^2 on element K. Shapes (nt, 2nbf, 2nbf).
    """
    k = space.pair.velocity_degree
    rule = quadrature(quad_degree or max(2 * k, 2))
    w, pts = rule.weights, rule.points
    g = _phys_grads_at(space, pts)
    scale = 2.0 * space.mesh.areas
    nbf = space.n_basis

    t1 = np.einsum("q,eqib,eqjb->eij", w, g, g)
    t2 = np.einsum("q,eqid,eqjc->eijdc", w, g, g)
    M_D = 0.5 * (np.einsum("eij,cd->eicjd", t1, np.eye(2))
                 + t2.transpose(0, 1, 4, 2, 3))
    M_D = (M_D * scale[:, None, None, None, None]
           ).reshape(-1, 2 * nbf, 2 * nbf)

    Aop = _stress_divergence_op(space, pts)
    M_A = np.einsum("q,eqicr,eqjdr->eicjd", w, Aop, Aop)
    M_A = (M_A.reshape(-1, 2 * nbf, 2 * nbf)
           * (scale * space.mesh.diameters ** 2)[:, None, None])
    return M_A, M_D


def estimate_CI(space):
    """Largest admissible stabilization bound C_I of the velocity space.

    C_I is 1 / max_K sup_v h_K^2 ||div D(v)||_K^2 / ||D(v)||_K^2, the
    supremum taken over the local velocity space (rigid motions, the
    kernel of D, excluded). P1 velocity has div D(v) = 0 identically,
    so the bound is infinite and every alpha > 0 is admissible.
    """
    if space.pair.velocity_degree == 1:
        return math.inf
    M_A, M_D = inverse_inequality_pencils(space)
    wD, V = np.linalg.eigh(M_D)
    # kernel of M_D is exactly the 3 rigid motions; deflate them
    gap_ok = wD[:, 3] > 1e-8 * wD[:, -1]
    small_ok = wD[:, 2] < 1e-8 * wD[:, -1]
    if not (gap_ok.all() and small_ok.all()):
        raise RuntimeError("rigid-motion kernel of the strain pencil "
                           "not cleanly separated; degenerate element?")
    W = V[:, :, 3:] / np.sqrt(wD[:, None, 3:])
    At = np.einsum("eks,ekl,elt->est", W, M_A, W)
    At = 0.5 * (At + At.transpose(0, 2, 1))
    lam = np.linalg.eigvalsh(At)[:, -1]
    return float(1.0 / lam.max())


def default_alpha(space):
    """Default stabilization parameter: 0.1 for P1, C_I/4 for P2."""
    if space.pair.velocity_degree == 1:
        return 0.1
    return estimate_CI(space) / 4.0


# ----------------------------------------------------------------------
# full system

@dataclass
class AssembledSystem:
    """Reduced linear system with constraint bookkeeping.

    matrix/rhs live on the free dofs (Dirichlet velocity dofs
    eliminated); free_dofs maps them back into the full ordering
    (velocity interleaved first, then pressure). mean_vector, present
    when the whole boundary is Dirichlet, carries the pressure means
    int psi_j used to pin the pressure gauge via one Lagrange
    multiplier.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free_dofs: np.ndarray
    n_u_free: int
    n_u: int
    n_p: int
    alpha: float
    c_i: float
    mean_vector: np.ndarray = None
    dirichlet_values: np.ndarray = None
    space: FeSpace = None
    problem: StokesProblem = None
    quad_degrees: dict = field(default_factory=dict)


def pressure_integral_vector(space):
    """Vector of int_Omega psi_j over pressure basis functions."""
    out = np.zeros(space.n_p)
    np.add.at(out, space.mesh.triangles.ravel(),
              np.repeat(space.mesh.areas / 3.0, 3))
    return out


def assemble_system(space, problem, quad_degree=None):
    """Assemble the stabilized saddle system with BCs applied.

    Resolves alpha (None means the space default), enforces
    0 <= alpha < C_I, eliminates Dirichlet velocity dofs symmetrically
    (lifting inhomogeneous boundary values into the right-hand side),
    and records the mean-pressure constraint when there is no Neumann
    boundary to fix the pressure gauge.
    """
    alpha = problem.alpha
    if alpha is None:
        alpha = default_alpha(space)
    alpha = float(alpha)
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    c_i = estimate_CI(space)
    if alpha >= c_i:
        raise InadmissibleAlphaError(
            f"alpha = {alpha:.6g} is not below the inverse-inequality "
            f"bound C_I = {c_i:.6g}; the stabilized form loses coercivity")

    k = space.pair.velocity_degree
    qd_matrix = quad_degree or max(2 * k, 2)
    qd_load = min(2 * k + 2, 10)
    A_uu, A_up = assemble_B(space, qd_matrix)
    M = sp.bmat([[A_uu, A_up], [A_up.T, None]], format="csr")
    if alpha != 0.0:
        M = (M - alpha * assemble_Sh(space, qd_matrix)).tocsr()
    rhs = assemble_F(space, problem, qd_load)
    if alpha != 0.0:
        rhs = rhs - alpha * assemble_Lh(space, problem, qd_load)

    lift = None
    u_d = problem.dirichlet_data()
    if u_d is not None and len(space.dirichlet_dofs):
        uvals, _ = interpolate(space, u=u_d)
        z = np.zeros(space.n_u + space.n_p)
        z[space.dirichlet_dofs] = uvals[space.dirichlet_dofs]
        if np.any(z):
            rhs = rhs - M @ z
            lift = z[:space.n_u]

    free = np.concatenate([space.free_velocity_dofs,
                           space.n_u + np.arange(space.n_p)])
    K = M[free][:, free].tocsr()
    b = rhs[free]

    mean_vector = None
    if not space.mesh.has_neumann:
        mv = np.zeros(len(free))
        mv[len(space.free_velocity_dofs):] = pressure_integral_vector(space)
        mean_vector = mv

    return AssembledSystem(
        matrix=K, rhs=b, free_dofs=free,
        n_u_free=len(space.free_velocity_dofs),
        n_u=space.n_u, n_p=space.n_p,
        alpha=alpha, c_i=c_i, mean_vector=mean_vector,
        dirichlet_values=lift,
        space=space, problem=problem,
        quad_degrees={"volume_matrix": qd_matrix, "volume_load": qd_load,
                      "edge": 2 * k + 2},
    )
