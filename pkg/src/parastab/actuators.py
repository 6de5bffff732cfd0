"""Internal (indicator) and boundary (sinusoidal arc) actuator families."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCell, RankDeficient
from .fem import solve_spd

STANDARD_OMEGA = ((0.0, 0.5), (0.0, 1.0 / 3.0))


def gram_schmidt_m(vectors, Mii):
    """Orthonormalize the columns of ``vectors`` in the ``Mii`` inner product.

    Returns ``(S, U)`` with ``S^T Mii S = I`` and ``vectors = S @ U``, ``U``
    upper triangular.  Uses modified Gram-Schmidt with one
    reorthogonalization pass.
    """
    V = np.array(vectors, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    n, m = V.shape
    S = np.zeros((n, m))
    U = np.zeros((m, m))
    for j in range(m):
        v = V[:, j].copy()
        start = np.sqrt(max(v @ (Mii @ v), 0.0))
        for _ in range(2):
            for i in range(j):
                c = S[:, i] @ (Mii @ v)
                v -= c * S[:, i]
                U[i, j] += c
        norm = np.sqrt(max(v @ (Mii @ v), 0.0))
        if start == 0.0 or norm < 1e-12 * start:
            raise RankDeficient(j + 1)
        S[:, j] = v / norm
        U[j, j] = norm
    return S, U


@dataclass(frozen=True)
class InternalActuatorSet:
    cells: list             # rectangles ((x0, x1), (y0, y1)) per actuator
    indicators: np.ndarray  # (ni, M) 0/1 on interior nodes
    chi_mask: np.ndarray    # (ni,) values of chi * 1_omega
    S_M: np.ndarray         # (ni, M), M_ii-orthonormal
    U: np.ndarray           # (M, M), indicators = S_M @ U
    R_in: np.ndarray        # (ni, M)
    omega_rect: tuple = None
    grid: tuple = None

    @property
    def count(self):
        return self.R_in.shape[1]

    def raw_coefficients(self, coeffs):
        """Indicator-basis coefficients from orthonormal-basis coefficients."""
        if self.U is None:
            return np.asarray(coeffs)
        return np.linalg.solve(self.U, coeffs)


def grid_cells(omega_rect, m, n):
    (x0, x1), (y0, y1) = omega_rect
    dx, dy = (x1 - x0) / m, (y1 - y0) / n
    cells = []
    for l2 in range(n):
        for l1 in range(m):
            cells.append(((x0 + l1 * dx, x0 + (l1 + 1) * dx),
                          (y0 + l2 * dy, y0 + (l2 + 1) * dy)))
    return cells


def _grid_membership(points, omega_rect, m, n):
    """Cell index per point, -1 outside; half-open cells, last one closed."""
    (x0, x1), (y0, y1) = omega_rect
    x, y = points[:, 0], points[:, 1]
    inside = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
    l1 = np.clip(np.floor((x - x0) / ((x1 - x0) / m) + 1e-12), 0, m - 1).astype(int)
    l2 = np.clip(np.floor((y - y0) / ((y1 - y0) / n) + 1e-12), 0, n - 1).astype(int)
    return np.where(inside, l1 + m * l2, -1)


def _rect_membership(points, rects):
    x, y = points[:, 0], points[:, 1]
    out = np.full(len(points), -1)
    for idx, ((a0, a1), (b0, b1)) in enumerate(rects):
        hit = (out < 0) & (x >= a0) & (x <= a1) & (y >= b0) & (y <= b1)
        out[hit] = idx
    return out


def build_internal_actuators(ops, omega_rect=STANDARD_OMEGA, m=3, n=2, chi=None, rects=None):
    """Piecewise-constant actuators on an ``m x n`` grid of ``omega_rect``.

    ``rects`` replaces the grid by an explicit list of rectangles.  ``chi``
    is an interior nodal mask; it defaults to the indicator of the union of
    the cells.
    """
    pts = ops.points[:ops.ni]
    if rects is None:
        member = _grid_membership(pts, omega_rect, m, n)
        cells = grid_cells(omega_rect, m, n)
    else:
        cells = [tuple(map(tuple, r)) for r in rects]
        member = _rect_membership(pts, cells)
    count = len(cells)
    ind = np.zeros((ops.ni, count))
    for c in range(count):
        hit = member == c
        if not hit.any():
            raise EmptyCell(c + 1)
        ind[hit, c] = 1.0
    chi_mask = (member >= 0).astype(float) if chi is None else np.asarray(chi, float)
    Mii = ops.Mb.ii
    S_M, U = gram_schmidt_m(ind, Mii)
    R = chi_mask[:, None] * S_M
    return InternalActuatorSet(cells=cells, indicators=ind, chi_mask=chi_mask, S_M=S_M,
                               U=U, R_in=R, omega_rect=omega_rect,
                               grid=None if rects is not None else (m, n))


def build_full_internal(ops, omega_rect=STANDARD_OMEGA, chi=None):
    """Unrestricted control in ``omega_rect``: ``R_in R_in^T = D_{chi 1_omega}``.

    ``R_in`` keeps one unit column per interior node of the rectangle.
    """
    pts = ops.points[:ops.ni]
    member = _rect_membership(pts, [omega_rect])
    nodes = np.flatnonzero(member >= 0)
    if nodes.size == 0:
        raise EmptyCell(1)
    mask = np.zeros(ops.ni)
    mask[nodes] = 1.0
    chi_mask = mask if chi is None else np.asarray(chi, float) * mask
    R = np.zeros((ops.ni, nodes.size))
    R[nodes, np.arange(nodes.size)] = np.sqrt(chi_mask[nodes])
    return InternalActuatorSet(cells=[omega_rect], indicators=R.copy(), chi_mask=chi_mask,
                               S_M=None, U=None, R_in=R, omega_rect=omega_rect, grid=None)


@dataclass(frozen=True)
class BoundaryActuatorSet:
    arcs: list                 # (theta0, theta1, frequency) per actuator
    psi_traces: np.ndarray     # (s_e, M) in ops boundary order
    psi_extensions: np.ndarray  # (s_p, M) full nodal vectors, ops order
    B_psi_bar: np.ndarray      # (ni, M)
    R_bo: np.ndarray           # (ni + M, M)
    varsigma: float
    nu: float

    @property
    def count(self):
        return self.psi_traces.shape[1]

    @property
    def theta0(self):
        return min(a[0] for a in self.arcs)

    @property
    def theta1(self):
        return max(a[1] for a in self.arcs)


def psi(theta, theta0, theta1, i, scaled_pi=False):
    """Arc actuator shape ``1_(theta0, theta1) sin(i (theta - theta0)/(theta1 - theta0))``."""
    theta = np.asarray(theta, dtype=float)
    ratio = (theta - theta0) / (theta1 - theta0)
    arg = i * ratio * (np.pi if scaled_pi else 1.0)
    inside = (theta > theta0) & (theta < theta1)
    return np.where(inside, np.sin(arg), 0.0)


def extend(ops, traces, varsigma, nu):
    """Discrete extension: ``(nu S_ii + varsigma M_ii) x_i = -(nu S_ib + varsigma M_ib) trace``."""
    A = nu * ops.Sb.ii + varsigma * ops.Mb.ii
    Ab = nu * ops.Sb.ib + varsigma * ops.Mb.ib
    traces = np.atleast_2d(np.asarray(traces, float).T).T
    cols = [solve_spd(A, -(Ab @ traces[:, c])) for c in range(traces.shape[1])]
    interior = np.column_stack(cols) if cols else np.zeros((ops.ni, 0))
    return np.vstack([interior, traces])


def build_boundary_actuators(ops, theta0=np.pi, theta1=1.25 * np.pi, M=4, varsigma=10.0,
                             nu=1.0, scaled_pi=False, arcs=None):
    """Boundary actuators ``Psi_1..Psi_M`` on one arc, or one per entry of ``arcs``.

    ``arcs`` is a list of ``(theta0, theta1)`` pairs, each carrying the
    lowest-frequency shape.
    """
    if arcs is None:
        if M < 1:
            raise ValueError("at least one boundary actuator is required")
        if not 0.0 <= theta0 < theta1 <= 2 * np.pi:
            raise ValueError("need 0 <= theta0 < theta1 <= 2*pi")
        spec = [(theta0, theta1, i) for i in range(1, M + 1)]
    else:
        spec = [(float(a), float(b), 1) for a, b in arcs]
        if not spec:
            raise ValueError("at least one boundary actuator is required")
    if nu <= 0:
        raise ValueError("nu must be positive")
    traces = np.column_stack([psi(ops.theta_b, a, b, i, scaled_pi) for a, b, i in spec])
    ext = extend(ops, traces, varsigma, nu)
    ni = ops.ni
    correction = ops.M_ii_lu.solve(ops.Mb.ib @ traces)
    B_bar = ext[:ni] + correction
    R_bo = np.vstack([B_bar, np.eye(len(spec))])
    return BoundaryActuatorSet(arcs=spec, psi_traces=traces, psi_extensions=ext,
                               B_psi_bar=B_bar, R_bo=R_bo, varsigma=float(varsigma),
                               nu=float(nu))


def actuator_table(ops, aset):
    """Nodal values (mesh order) of each actuator, one column per actuator."""
    if isinstance(aset, BoundaryActuatorSet):
        cols = aset.psi_extensions
    else:
        cols = np.vstack([aset.indicators, np.zeros((ops.n - ops.ni, aset.indicators.shape[1]))])
    return ops.to_mesh_order(cols)
