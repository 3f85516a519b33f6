"""Direct solution of the assembled saddle system and solution norms."""

import ctypes
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.linalg
from scipy.sparse.linalg import splu

from . import forms
from .space import (physical_points, pressure_values, velocity_gradients,
                    velocity_values)


class SolverError(Exception):
    """Factorization or residual failure; message names the failing part."""


def _purge_poisoned_stdout():
    """Discard BLAS complaints buffered by a failed factorization.

    A singular factorization can make the BLAS input checker print
    " ** On entry to DGEMV ..." lines through the C-level stdout
    stream, where they sit buffered until interpreter shutdown and
    then surface detached from their cause. Drain the C buffer into
    devnull right away; Python's own sys.stdout buffer is separate
    and unaffected.
    """
    try:
        fflush = ctypes.CDLL(None).fflush
        devnull = os.open(os.devnull, os.O_WRONLY)
    except (OSError, TypeError, AttributeError):
        return
    saved = os.dup(1)
    try:
        os.dup2(devnull, 1)
        fflush(None)
    finally:
        os.dup2(saved, 1)
        os.close(saved)
        os.close(devnull)


@dataclass
class DiscreteSolution:
    """Solution fields in the full dof ordering.

    u has interleaved velocity components per node (Dirichlet dofs
    zero), p one value per mesh vertex. multiplier is the Lagrange
    multiplier of the mean-pressure constraint when one was used.
    """

    u: np.ndarray
    p: np.ndarray
    residual: float
    multiplier: float = None
    diagnostics: dict = field(default_factory=dict)


def _diagnose(system, reason):
    """Try to localize a solve failure to a block of the saddle system."""
    _purge_poisoned_stdout()
    nuf = system.n_u_free
    msg = [f"linear solve failed: {reason}"]
    try:
        A = system.matrix[:nuf, :nuf].tocsc()
        lu = splu(A)
        x = lu.solve(np.ones(nuf))
        if np.all(np.isfinite(x)):
            msg.append("velocity block factorizes cleanly; the failure "
                       "sits in the pressure/saddle coupling")
            if system.alpha == 0.0:
                msg.append("alpha = 0: equal-order pairs are singular "
                           "without stabilization")
            elif system.mean_vector is None:
                msg.append("check the boundary tags: without a Neumann "
                           "part the pressure gauge must be pinned")
        else:
            msg.append("velocity block itself is singular")
    except RuntimeError:
        msg.append("velocity block itself fails to factorize")
    return "; ".join(msg)


def solve(system):
    """Factorize and solve, with a residual check and one refinement step.

    Raises SolverError when the factorization fails or the relative
    residual stays above 1e-9 after one step of iterative refinement.
    """
    K = system.matrix
    b = system.rhs
    if system.mean_vector is not None:
        c = system.mean_vector
        K = sp.bmat([[K, c[:, None]], [c[None, :], None]], format="csc")
        b = np.concatenate([b, [0.0]])
    else:
        K = K.tocsc()

    try:
        lu = splu(K)
    except RuntimeError as exc:
        raise SolverError(_diagnose(system, str(exc))) from None

    # a structurally nonsingular but numerically singular matrix can
    # slip through splu; a vanishing pivot means the solve would only
    # produce garbage
    pivots = np.abs(lu.U.diagonal())
    if pivots.min() <= 1e-14 * max(pivots.max(), 1.0):
        raise SolverError(_diagnose(
            system, "factorization produced a zero pivot"))

    x = lu.solve(b)
    bnorm = max(float(np.linalg.norm(b)), 1e-30)
    if not np.all(np.isfinite(x)):
        raise SolverError(_diagnose(system, "non-finite solution values"))
    res = float(np.linalg.norm(K @ x - b)) / bnorm
    if res > 1e-9:
        x = x + lu.solve(b - K @ x)
        res = float(np.linalg.norm(K @ x - b)) / bnorm
    if not np.all(np.isfinite(x)) or res > 1e-9:
        raise SolverError(_diagnose(
            system, f"relative residual {res:.3e} above 1e-9 after "
            "iterative refinement"))

    multiplier = None
    if system.mean_vector is not None:
        multiplier = float(x[-1])
        x = x[:-1]

    full = np.zeros(system.n_u + system.n_p)
    if system.dirichlet_values is not None:
        full[:system.n_u] = system.dirichlet_values
    full[system.free_dofs] = x
    return DiscreteSolution(
        u=full[:system.n_u], p=full[system.n_u:], residual=res,
        multiplier=multiplier,
        diagnostics={"n_unknowns": K.shape[0], "alpha": system.alpha},
    )


def functional_norms(space, solution, exact, quad_degree=None):
    """Errors of a discrete solution against closed-form fields.

    Returns a dict with err_L2_u, err_H1_u (full norm), err_D_u
    (symmetric-gradient seminorm) and err_L2_p.
    """
    k = space.pair.velocity_degree
    rule = forms.quadrature(quad_degree or min(2 * k + 4, 10))
    w, pts = rule.weights, rule.points
    mesh = space.mesh
    scale = 2.0 * mesh.areas

    xy = physical_points(mesh, pts)
    x, y = xy[..., 0], xy[..., 1]
    eu = velocity_values(space, solution.u, pts) - np.asarray(exact.u(x, y))
    eg = velocity_gradients(space, solution.u, pts) \
        - np.asarray(exact.grad_u(x, y))
    ep = pressure_values(space, solution.p, pts) - np.asarray(exact.p(x, y))

    def cell_int(sq):
        return scale * np.einsum("q,eq->e", w, sq)

    l2u = cell_int(np.einsum("eqc,eqc->eq", eu, eu)).sum()
    h1semi = cell_int(np.einsum("eqcb,eqcb->eq", eg, eg)).sum()
    D = 0.5 * (eg + eg.transpose(0, 1, 3, 2))
    dsemi = cell_int(np.einsum("eqcb,eqcb->eq", D, D)).sum()
    l2p = cell_int(ep ** 2).sum()
    return {
        "err_L2_u": float(np.sqrt(l2u)),
        "err_H1_u": float(np.sqrt(l2u + h1semi)),
        "err_D_u": float(np.sqrt(dsemi)),
        "err_L2_p": float(np.sqrt(l2p)),
    }


def combined_error(norms):
    """Scalar error driving rates and effectivity: ||e_u||_1 + ||e_p||_0."""
    return float(norms["err_H1_u"] + norms["err_L2_p"])


def schur_pressure_probe(space, problem):
    """Smallest generalized eigenvalue of the pressure Schur complement.

    Assembles the stabilized system, forms
    S = B A^{-1} B^T + alpha * S_pp densely on the pressure space, and
    returns the smallest eigenvalue of S q = lambda M_p q (the constant
    mode is skipped when the whole boundary is Dirichlet, since it is
    fixed by the gauge, not by the discretization). A mesh-independent
    lower bound on this value is the discrete counterpart of saddle
    stability. Dense linear algebra: intended for coarse probe meshes.
    """
    system = forms.assemble_system(space, problem)
    nuf = system.n_u_free
    A = system.matrix[:nuf, :nuf].tocsc()
    Bt = system.matrix[:nuf, nuf:].toarray()
    C = -system.matrix[nuf:, nuf:].toarray()

    lu = splu(A)
    S = Bt.T @ lu.solve(Bt) + C
    S = 0.5 * (S + S.T)
    Mp = forms.pressure_mass(space).toarray()
    vals = scipy.linalg.eigh(S, Mp, eigvals_only=True)
    if system.mean_vector is not None:
        # gauge mode: S annihilates constants in the enclosed case
        if not vals[0] < 1e-8 * max(vals[-1], 1e-30):
            raise SolverError(
                "expected a zero Schur mode for the constant pressure, "
                f"got {vals[0]:.3e}")
        return float(vals[1])
    return float(vals[0])
