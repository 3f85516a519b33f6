"""Residual a posteriori error estimation.

Element indicator:   eta_K^2 = h_K^2 ||div D(u_h) - grad p_h + f||_K^2
                               + ||div u_h - g||_K^2
Edge indicator:      eta_E^2 = h_E ||[[(D(u_h) - p_h I) n]]||_E^2   (interior)
                               h_E ||(D(u_h) - p_h I) n - t||_E^2   (Neumann)
Global estimator:    eta^2 = sum eta_K^2 + sum eta_E^2.

Dirichlet edges carry no indicator. The jump [[sigma n]] is the
difference of the two one-sided normal tractions taken with one common
unit normal of the edge; it flips sign when the two elements swap
roles, so eta_E does not depend on the ordering.

Oscillation terms measure data resolution: osc_K(f) = h_K ||f - f_h||_K
with f_h the L2-projection of f onto the velocity space (global by
default, elementwise behind a flag) and osc_E(t) = h_E^{1/2}
||t - t_h||_E with t_h projected onto the boundary trace space.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import splu

from . import forms, solver
from .mesh import DIRICHLET, INTERIOR, NEUMANN, REF_VERTICES
from .space import (physical_points, pressure_gradients, pressure_values,
                    scalar_basis, velocity_gradients,
                    velocity_stress_laplacian, velocity_values)


@dataclass
class ErrorReport:
    """All estimator components of one solve.

    eta_K and eta_E are per-element / per-edge indicator values (not
    squared); osc_K_f and osc_E_t likewise. eta, osc_f, osc_t are the
    global square-sum aggregates. true_errors and effectivity
    (eta / (||e_u||_1 + ||e_p||_0)) are present when the problem
    carries an exact solution.
    """

    eta_K: np.ndarray
    eta_E: np.ndarray
    osc_K_f: np.ndarray
    osc_E_t: np.ndarray
    eta: float
    osc_f: float
    osc_t: float
    true_errors: dict = None
    effectivity: float = None


def element_estimator(solution, space, problem, K=None, quad_degree=None):
    """Element residual indicators; all of them, or one if K is given."""
    k = space.pair.velocity_degree
    rule = forms.quadrature(quad_degree or min(2 * k + 2, 10))
    w, pts = rule.weights, rule.points
    mesh = space.mesh

    xy = physical_points(mesh, pts)
    x, y = xy[..., 0], xy[..., 1]
    res = np.asarray(problem.f(x, y), dtype=float).copy()
    res += velocity_stress_laplacian(space, solution.u, pts)
    res -= pressure_gradients(space, solution.p, pts)
    mom = np.einsum("q,eqc,eqc->e", w, res, res)

    G = velocity_gradients(space, solution.u, pts)
    div = G[..., 0, 0] + G[..., 1, 1]
    if problem.g is not None:
        div = div - np.asarray(problem.g(x, y), dtype=float)
    mass = np.einsum("q,eq,eq->e", w, div, div)

    scale = 2.0 * mesh.areas
    eta2 = mesh.diameters ** 2 * scale * mom + scale * mass
    eta = np.sqrt(eta2)
    return eta if K is None else float(eta[K])


def _edge_side_stress(solution, space, elems, edge_ids, s):
    """Stress sigma = D(u_h) - p_h I at edge points, seen from `elems`.

    s are edge parameters in [0,1]; points run from the edge's first
    to second vertex. Returns (ne, nq, 2, 2).
    """
    mesh = space.mesh
    tri = mesh.triangles[elems]
    ends = mesh.edges[edge_ids]
    loc_a = np.argmax(tri == ends[:, 0][:, None], axis=1)
    loc_b = np.argmax(tri == ends[:, 1][:, None], axis=1)
    ref = (REF_VERTICES[loc_a][:, None, :] * (1.0 - s)[None, :, None]
           + REF_VERTICES[loc_b][:, None, :] * s[None, :, None])

    _, gref, _ = scalar_basis(space.pair.velocity_degree, ref)
    it = mesh.inv_jacobians_t[elems]
    g = np.einsum("mba,mqia->mqib", it, gref)
    lc = space.local_velocity_coefs(solution.u, elems)
    G = np.einsum("mqib,mic->mqcb", g, lc)
    D = 0.5 * (G + G.transpose(0, 1, 3, 2))

    pval, _, _ = scalar_basis(1, ref)
    pv = np.einsum("mqi,mi->mq", pval, solution.p[tri])
    return D - pv[..., None, None] * np.eye(2)


def _edge_normals(mesh, edge_ids):
    """Unit normals, oriented away from the first incident element."""
    ends = mesh.edges[edge_ids]
    d = mesh.vertices[ends[:, 1]] - mesh.vertices[ends[:, 0]]
    n = np.column_stack([d[:, 1], -d[:, 0]])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    first = mesh.e2t[edge_ids, 0]
    cent = mesh.corner_coords[first].mean(axis=1)
    mid = 0.5 * (mesh.vertices[ends[:, 0]] + mesh.vertices[ends[:, 1]])
    flip = np.einsum("md,md->m", mid - cent, n) < 0
    n[flip] *= -1.0
    return n


def edge_estimator(solution, space, problem, E=None, quad_degree=None):
    """Edge traction indicators; full array, or one edge if E is given.

    Interior edges measure the jump of the normal stress across the
    edge, Neumann edges the defect against the prescribed traction,
    Dirichlet edges are zero.
    """
    mesh = space.mesh
    k = space.pair.velocity_degree
    s, w = forms.edge_quadrature(quad_degree or max(2 * k, 2))
    eta = np.zeros(mesh.n_edges)

    interior = np.flatnonzero((mesh.edge_tags == INTERIOR)
                              & (mesh.e2t[:, 1] >= 0))
    if len(interior):
        n = _edge_normals(mesh, interior)
        s0 = _edge_side_stress(solution, space, mesh.e2t[interior, 0],
                               interior, s)
        s1 = _edge_side_stress(solution, space, mesh.e2t[interior, 1],
                               interior, s)
        jump = np.einsum("mqcb,mb->mqc", s0 - s1, n)
        val = np.einsum("q,mqc,mqc->m", w, jump, jump)
        eta[interior] = mesh.edge_lengths[interior] * np.sqrt(val)

    neumann = np.flatnonzero(mesh.edge_tags == NEUMANN)
    if len(neumann):
        n = _edge_normals(mesh, neumann)
        sig = _edge_side_stress(solution, space, mesh.e2t[neumann, 0],
                                neumann, s)
        flux = np.einsum("mqcb,mb->mqc", sig, n)
        if problem.t is not None:
            pa = mesh.vertices[mesh.edges[neumann, 0]]
            pb = mesh.vertices[mesh.edges[neumann, 1]]
            xy = pa[:, None, :] + s[None, :, None] * (pb - pa)[:, None, :]
            flux = flux - np.asarray(problem.t(xy[..., 0], xy[..., 1]),
                                     dtype=float)
        val = np.einsum("q,mqc,mqc->m", w, flux, flux)
        eta[neumann] = mesh.edge_lengths[neumann] * np.sqrt(val)

    return eta if E is None else float(eta[E])


# ----------------------------------------------------------------------
# oscillations

def _project_f_global(space, problem, rule):
    """Nodal coefficients of the global L2-projection of f onto V_h."""
    M = forms.velocity_scalar_mass(space)
    w, pts = rule.weights, rule.points
    xy = physical_points(space.mesh, pts)
    fv = np.asarray(problem.f(xy[..., 0], xy[..., 1]), dtype=float)
    val, _, _ = scalar_basis(space.pair.velocity_degree, pts)
    loc = np.einsum("q,eqc,qi->eic", w, fv, val) \
        * (2.0 * space.mesh.areas)[:, None, None]
    b = np.zeros((space.n_nodes, 2))
    np.add.at(b, space.elem_nodes.ravel(), loc.reshape(-1, 2))
    return splu(M.tocsc()).solve(b)


def _project_f_element(space, problem, rule):
    """Per-element polynomial L2-projection; returns values at the
    quadrature points directly (the projection is discontinuous)."""
    w, pts = rule.weights, rule.points
    val, _, _ = scalar_basis(space.pair.velocity_degree, pts)
    Mref = np.einsum("q,qi,qj->ij", w, val, val)
    xy = physical_points(space.mesh, pts)
    fv = np.asarray(problem.f(xy[..., 0], xy[..., 1]), dtype=float)
    rhs = np.einsum("q,eqc,qi->eic", w, fv, val)
    coef = np.linalg.solve(Mref[None], rhs)          # (nt, nbf, 2)
    return np.einsum("qi,eic->eqc", val, coef)


def oscillations(problem, space, projection="global", quad_degree=None):
    """Data oscillation terms (osc_K(f) per element, osc_E(t) per edge).

    projection selects how f_h is built: "global" solves the full
    mass-matrix projection onto the velocity space, "element" projects
    independently on each element (cheaper, discontinuous).
    """
    k = space.pair.velocity_degree
    rule = forms.quadrature(quad_degree or min(2 * k + 4, 10))
    w, pts = rule.weights, rule.points
    mesh = space.mesh

    xy = physical_points(mesh, pts)
    fv = np.asarray(problem.f(xy[..., 0], xy[..., 1]), dtype=float)
    if projection == "global":
        fh_nodes = _project_f_global(space, problem, rule)
        val, _, _ = scalar_basis(k, pts)
        fh = np.einsum("qi,eic->eqc", val, fh_nodes[space.elem_nodes])
    elif projection == "element":
        fh = _project_f_element(space, problem, rule)
    else:
        raise ValueError(f"projection must be 'global' or 'element', "
                         f"got {projection!r}")
    diff = fv - fh
    osc_K = mesh.diameters * np.sqrt(
        2.0 * mesh.areas * np.einsum("q,eqc,eqc->e", w, diff, diff))

    osc_E = np.zeros(mesh.n_edges)
    neumann = np.flatnonzero(mesh.edge_tags == NEUMANN)
    if len(neumann) and problem.t is not None:
        osc_E[neumann] = _trace_oscillation(space, problem, neumann)
    return osc_K, osc_E


def _trace_oscillation(space, problem, neumann):
    """osc_E(t) on the Neumann edges via trace-space L2 projection."""
    mesh = space.mesh
    k = space.pair.velocity_degree
    s, w = forms.edge_quadrature(min(2 * k + 4, 20))

    if k == 1:
        tval = np.stack([1.0 - s, s], axis=1)                 # (nq, 2)
        enodes = mesh.edges[neumann]
    else:
        tval = np.stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1),
                         4 * s * (1 - s)], axis=1)
        enodes = np.column_stack([mesh.edges[neumann],
                                  mesh.n_vertices + neumann])

    nodes, local = np.unique(enodes, return_inverse=True)
    local = local.reshape(enodes.shape)
    nn = len(nodes)
    L = mesh.edge_lengths[neumann]

    Mloc = np.einsum("qi,qj,q->ij", tval, tval, w)
    M = np.zeros((nn, nn))
    np.add.at(M, (local[:, :, None], local[:, None, :]),
              Mloc[None] * L[:, None, None])

    pa = mesh.vertices[mesh.edges[neumann, 0]]
    pb = mesh.vertices[mesh.edges[neumann, 1]]
    xy = pa[:, None, :] + s[None, :, None] * (pb - pa)[:, None, :]
    tv = np.asarray(problem.t(xy[..., 0], xy[..., 1]), dtype=float)
    rhs = np.zeros((nn, 2))
    loc = np.einsum("q,eqc,qi->eic", w, tv, tval) * L[:, None, None]
    np.add.at(rhs, local.ravel(), loc.reshape(-1, 2))

    th_nodes = np.linalg.solve(M, rhs)
    th = np.einsum("qi,eic->eqc", tval, th_nodes[local])
    diff = tv - th
    return np.sqrt(L) * np.sqrt(
        L * np.einsum("q,eqc,eqc->e", w, diff, diff))


# ----------------------------------------------------------------------
# aggregation

def global_report(solution, space, problem, projection="global"):
    """Assemble the full ErrorReport for one solved problem."""
    eta_K = element_estimator(solution, space, problem)
    eta_E = edge_estimator(solution, space, problem)
    osc_K, osc_E = oscillations(problem, space, projection=projection)
    eta = float(np.sqrt(np.sum(eta_K ** 2) + np.sum(eta_E ** 2)))
    osc_f = float(np.sqrt(np.sum(osc_K ** 2)))
    osc_t = float(np.sqrt(np.sum(osc_E ** 2)))

    true_errors = effectivity = None
    if problem.exact is not None:
        true_errors = solver.functional_norms(space, solution, problem.exact)
        effectivity = eta / solver.combined_error(true_errors)
    return ErrorReport(eta_K=eta_K, eta_E=eta_E, osc_K_f=osc_K,
                       osc_E_t=osc_E, eta=eta, osc_f=osc_f, osc_t=osc_t,
                       true_errors=true_errors, effectivity=effectivity)


@dataclass
class EfficiencyAudit:
    """Per-element efficiency ratios eta_K / local error + oscillation."""

    ratios: np.ndarray
    max_ratio: float
    median_ratio: float
    n_sentinel: int


def efficiency_audit(solution, space, problem, quad_degree=None):
    """Ratio of each element indicator to the local true error.

    The denominator collects the velocity strain error and pressure
    error over the patch of K and its edge neighbors, plus the local
    oscillation terms. Elements where both sides vanish (exact-in-space
    solutions) are reported with the unit sentinel 1.0.
    """
    if problem.exact is None:
        raise ValueError("efficiency_audit needs problem.exact")
    k = space.pair.velocity_degree
    rule = forms.quadrature(quad_degree or min(2 * k + 4, 10))
    w, pts = rule.weights, rule.points
    mesh = space.mesh
    scale_el = 2.0 * mesh.areas

    xy = physical_points(mesh, pts)
    x, y = xy[..., 0], xy[..., 1]
    eg = velocity_gradients(space, solution.u, pts) \
        - np.asarray(problem.exact.grad_u(x, y))
    D = 0.5 * (eg + eg.transpose(0, 1, 3, 2))
    d2 = scale_el * np.einsum("q,eqcb,eqcb->e", w, D, D)
    ep = pressure_values(space, solution.p, pts) \
        - np.asarray(problem.exact.p(x, y))
    p2 = scale_el * np.einsum("q,eq,eq->e", w, ep, ep)

    eta_K = element_estimator(solution, space, problem)
    osc_K, osc_E = oscillations(problem, space)

    # element patch: self plus edge neighbors
    flat = mesh.e2t[mesh.t2e].reshape(len(d2), -1)       # (nt, 6)
    own_id = np.arange(len(d2))[:, None]
    take = (flat >= 0) & (flat != own_id)
    patch_d2 = d2.copy()
    patch_p2 = p2.copy()
    patch_o2 = osc_K ** 2
    for col in range(flat.shape[1]):
        sel = take[:, col]
        idx = flat[sel, col]
        patch_d2[sel] += d2[idx]
        patch_p2[sel] += p2[idx]
        patch_o2[sel] += osc_K[idx] ** 2

    osc_t2 = np.zeros(len(d2))
    for i in range(3):
        e = mesh.t2e[:, i]
        osc_t2 += np.where(mesh.edge_tags[e] == NEUMANN, osc_E[e] ** 2, 0.0)

    denom = np.sqrt(patch_d2) + np.sqrt(patch_p2) \
        + np.sqrt(patch_o2) + np.sqrt(osc_t2)

    # 0/0 guard is relative to the size of the discrete solution itself
    Gh = velocity_gradients(space, solution.u, pts)
    Dh = 0.5 * (Gh + Gh.transpose(0, 1, 3, 2))
    ph = pressure_values(space, solution.p, pts)
    scale = float(
        np.sqrt((scale_el * np.einsum("q,eqcb,eqcb->e", w, Dh, Dh)).sum())
        + np.sqrt((scale_el * np.einsum("q,eq,eq->e", w, ph, ph)).sum()))
    tiny = 1e-9 * max(scale, 1e-30)
    sentinel = (eta_K <= tiny) & (denom <= tiny)
    ratios = np.where(sentinel, 1.0,
                      eta_K / np.maximum(denom, 1e-300))
    return EfficiencyAudit(
        ratios=ratios,
        max_ratio=float(ratios.max()),
        median_ratio=float(np.median(ratios)),
        n_sentinel=int(sentinel.sum()),
    )
