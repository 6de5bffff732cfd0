"""Piecewise-linear finite element operators on a :class:`~parastab.mesh.Mesh`.

All matrices and nodal vectors produced here use the interior-first
ordering ``mesh.perm``: the first ``ni`` entries are interior nodes, the
remaining ones boundary nodes.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularSystem, SolverNonConvergence

CG_RTOL = 1e-12


@dataclass(frozen=True)
class Blocks:
    ii: sp.csr_matrix
    ib: sp.csr_matrix
    bi: sp.csr_matrix
    bb: sp.csr_matrix


def split(X, ni):
    X = sp.csr_matrix(X)
    return Blocks(X[:ni, :ni], X[:ni, ni:], X[ni:, :ni], X[ni:, ni:])


def local_matrices(p):
    """Exact P1 element matrices of the triangle with vertex rows ``p``.

    Returns ``(mass, stiffness, g1, g2)`` where ``g_k[i, j] = (phi_i, d_k phi_j)``.
    """
    p = np.asarray(p, dtype=float)
    area, grads = _geometry(p[None])
    area, grads = area[0], grads[0]
    mass = area / 12.0 * (np.ones((3, 3)) + np.eye(3))
    stiff = area * grads @ grads.T
    g1 = np.tile(grads[:, 0], (3, 1)) * area / 3.0
    g2 = np.tile(grads[:, 1], (3, 1)) * area / 3.0
    return mass, stiff, g1, g2


def _geometry(p):
    """Areas (n,) and hat-function gradients (n, 3, 2) of stacked triangles."""
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
                  - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    grads = np.empty(p.shape)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = (y[:, j] - y[:, k]) / (2.0 * area)
        grads[:, i, 1] = (x[:, k] - x[:, j]) / (2.0 * area)
    return area, grads


class FemOperators:
    """Mass ``M``, stiffness ``S`` and derivative matrices ``G1``, ``G2``.

    ``(G_k)_ij = (phi_i, d/dx_k phi_j)``.  Block views are available as
    ``Mb.ii``, ``Sb.ib``, ``G1b.ii`` and so on.
    """

    def __init__(self, mesh, M, S, G1, G2):
        self.mesh = mesh
        self.n = mesh.n_points
        self.ni = mesh.n_interior
        self.points = mesh.points[mesh.perm]
        self.theta_b = mesh.theta[mesh.perm][self.ni:]
        self.M, self.S, self.G1, self.G2 = M, S, G1, G2
        self.Mb = split(M, self.ni)
        self.Sb = split(S, self.ni)
        self.G1b = split(G1, self.ni)
        self.G2b = split(G2, self.ni)

    @property
    def x1(self):
        return self.points[:, 0]

    @property
    def x2(self):
        return self.points[:, 1]

    def to_mesh_order(self, v):
        """Reorder an ops-ordered vector (or column stack) to mesh order."""
        out = np.empty_like(v)
        out[self.mesh.perm] = v
        return out

    def from_mesh_order(self, v):
        return np.asarray(v)[self.mesh.perm]

    @cached_property
    def M_dense(self):
        return self.M.toarray()

    @cached_property
    def M_ii_chol(self):
        """Lower Cholesky factor of ``M_ii``."""
        return np.linalg.cholesky(self.Mb.ii.toarray())

    @cached_property
    def S_ii_chol(self):
        """Lower Cholesky factor of ``S_ii``."""
        return np.linalg.cholesky(self.Sb.ii.toarray())

    @cached_property
    def M_ii_lu(self):
        return spla.splu(sp.csc_matrix(self.Mb.ii))

    def eval(self, expr, t=0.0):
        """Nodal values of a scalar field (Expr, callable or constant)."""
        return nodal(expr, self.points, t)


def nodal(field, points, t=0.0):
    x1, x2 = points[:, 0], points[:, 1]
    if hasattr(field, "evaluate"):
        val = field.evaluate(t=t, x1=x1, x2=x2)
    elif callable(field):
        val = field(t, x1, x2)
    else:
        val = field
    return np.broadcast_to(np.asarray(val, dtype=float), x1.shape).copy()


def assemble(mesh):
    """Assemble the global P1 matrices with exact element integrals."""
    inv = np.empty(mesh.n_points, dtype=np.int64)
    inv[mesh.perm] = np.arange(mesh.n_points)
    tri = inv[mesh.triangles]
    p = mesh.points[mesh.triangles]
    area, grads = _geometry(p)
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    mass = area[:, None, None] * base
    stiff = area[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
    g1 = (area / 3.0)[:, None, None] * np.broadcast_to(grads[:, None, :, 0], (len(tri), 3, 3))
    g2 = (area / 3.0)[:, None, None] * np.broadcast_to(grads[:, None, :, 1], (len(tri), 3, 3))
    n = mesh.n_points

    def build(vals):
        return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(n, n))

    return FemOperators(mesh, build(mass), build(stiff), build(g1), build(g2))


class CoefficientField:
    """Reaction ``a`` and convection ``(b1, b2)`` coefficients of (t, x1, x2)."""

    def __init__(self, a=0.0, b1=0.0, b2=0.0):
        self.a, self.b1, self.b2 = a, b1, b2

    @property
    def stationary(self):
        return not any(_depends_on_t(f) for f in (self.a, self.b1, self.b2))

    def at(self, ops, t):
        return ops.eval(self.a, t), ops.eval(self.b1, t), ops.eval(self.b2, t)


def _depends_on_t(field):
    if hasattr(field, "variables"):
        return "t" in field.variables()
    return callable(field)


def _check_len(ops, *vecs):
    for v in vecs:
        if np.shape(v) != (ops.n,):
            raise ValueError(f"nodal vector of length {ops.n} expected, got shape {np.shape(v)}")


def reaction_matrix(ops, a_bar):
    """``(M D_a + D_a M) / 2``."""
    _check_len(ops, a_bar)
    D = sp.diags(a_bar)
    return sp.csr_matrix(0.5 * (ops.M @ D + D @ ops.M))


def convection_matrix(ops, b1_bar, b2_bar):
    """``G1 D_b1 + G2 D_b2``."""
    _check_len(ops, b1_bar, b2_bar)
    return sp.csr_matrix(ops.G1 @ sp.diags(b1_bar) + ops.G2 @ sp.diags(b2_bar))


def apply_reaction_convection(ops, a_bar, b1_bar, b2_bar, v):
    """Product of ``reaction_matrix + convection_matrix`` with ``v``, matrix-free."""
    return (0.5 * (ops.M @ (a_bar * v) + a_bar * (ops.M @ v))
            + ops.G1 @ (b1_bar * v) + ops.G2 @ (b2_bar * v))


def solve_spd(A, b, x0=None):
    """Conjugate gradients to relative residual 1e-12, at most 10n iterations."""
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return np.zeros_like(b)
    n = b.shape[0]
    x, info = spla.cg(A, b, x0=x0, rtol=CG_RTOL, atol=0.0, maxiter=10 * n)
    if info != 0 or not np.all(np.isfinite(x)):
        raise SolverNonConvergence("conjugate gradient", 10 * n)
    return x


def solve_general(A, b):
    """Direct sparse LU solve for nonsymmetric systems."""
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from None
    x = lu.solve(np.asarray(b, dtype=float))
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution")
    return x


def solve_elliptic(ops, mu, beta_r, beta_c1, beta_c2, h, boundary_values=None, t=0.0):
    """Solve ``-mu*Lap v + beta_r v + div(beta_c v) + h = 0`` with Dirichlet data.

    Fields may be Expr objects, callables of (t, x1, x2) or constants.
    ``boundary_values`` is ordered like ``ops.theta_b``.  Returns the full
    nodal vector in ops order.
    """
    ni = ops.ni
    br, c1, c2, hh = (ops.eval(f, t) for f in (beta_r, beta_c1, beta_c2, h))
    K = mu * ops.S + reaction_matrix(ops, br) + convection_matrix(ops, c1, c2)
    Kb = split(K, ni)
    vb = np.zeros(ops.n - ni) if boundary_values is None else np.asarray(boundary_values, float)
    rhs = -(Kb.ib @ vb) - (ops.M @ hh)[:ni]
    vi = solve_general(Kb.ii, rhs)
    return np.concatenate([vi, vb])


def norm_h2(ops, v):
    """Squared discrete L2 norm ``v^T M v`` (columns of a 2D array separately)."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != ops.n:
        raise ValueError("dimension mismatch")
    return np.einsum("i...,i...->...", v, ops.M @ v)


def norm_h2_interior(ops, vi):
    """Squared norm of a function given by its interior values, zero trace."""
    return np.einsum("i...,i...->...", vi, ops.Mb.ii @ vi)


def time_mass_matrix(n_steps, k):
    """P1 mass matrix of the uniform time mesh with ``n_steps`` intervals."""
    main = np.full(n_steps + 1, 4.0)
    main[0] = main[-1] = 2.0
    off = np.ones(n_steps)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") * (k / 6.0)


def spacetime_norm2(norms_h, k):
    """Squared Bochner norm from the per-node values ``|v(t_j)|_H``."""
    v = np.asarray(norms_h, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("need at least two time nodes")
    return float(v @ (time_mass_matrix(v.size - 1, k) @ v))


def spacetime_error(ops, Y, Yref, k):
    """Bochner-norm distance between two trajectories (columns = time nodes)."""
    d = np.asarray(Y) - np.asarray(Yref)
    return float(np.sqrt(spacetime_norm2(np.sqrt(np.maximum(norm_h2(ops, d), 0.0)), k)))


def to_triplets(A):
    """``i j value`` lines (1-based) for debugging dumps."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    return "".join(f"{C.row[i] + 1} {C.col[i] + 1} {C.data[i]:.17g}\n" for i in order)
