"""Semilinear parabolic system with cubic reaction and Burgers-type convection.

    y_t - nu Lap y + c3 y^3 + c2 y^2 + c1 y + div(y^2, y^2)/2 + f0 = 0,  y = g on the boundary.

The forcing ``f0`` and data ``g`` are manufactured from a reference
trajectory ``yhat`` so that ``yhat`` solves the system exactly.
"""

from dataclasses import dataclass
import logging

import numpy as np
import scipy.sparse as sp

from .actuators import BoundaryActuatorSet
from .errors import BlowUp, NewtonDivergence
from .expr import Num, add, mul, neg, parse_expr, power, sub
from .fem import CoefficientField, norm_h2, solve_general, solve_spd, spacetime_error
from .riccati import boundary_design
from .sim_linear import Trajectory, check_compatibility

log = logging.getLogger(__name__)

SCHEMES = ("extrapolation", "heun", "newton")
BLOWUP_FACTOR = 1e10


def manufactured_forcing(yhat, nu, c1, c2, c3):
    """Symbolic ``(f0, g)`` making ``yhat`` an exact solution."""
    y = parse_expr(yhat)
    dt = y.diff("t")
    d1, d2 = y.diff("x1"), y.diff("x2")
    lap = add(d1.diff("x1"), d2.diff("x2"))
    reaction = add(add(mul(Num(c3), power(y, 3)), mul(Num(c2), power(y, 2))), mul(Num(c1), y))
    # div(y^2, y^2)/2 = y (y_x1 + y_x2)
    convection = mul(y, add(d1, d2))
    residual = add(add(sub(dt, mul(Num(nu), lap)), reaction), convection)
    return neg(residual), y


def linearization(yhat, c1, c2, c3):
    """Coefficients of the linearized system around ``yhat``."""
    y = parse_expr(yhat)
    a = add(add(mul(Num(3.0 * c3), power(y, 2)), mul(Num(2.0 * c2), y)), Num(c1))
    return CoefficientField(a, y, y)


@dataclass
class NonlinearProblem:
    nu: float
    c1: float
    c2: float
    c3: float
    yhat: object

    def __post_init__(self):
        self.yhat = parse_expr(self.yhat)
        self.f0, self.g = manufactured_forcing(self.yhat, self.nu, self.c1, self.c2, self.c3)

    def linearized(self):
        return linearization(self.yhat, self.c1, self.c2, self.c3)

    def initial_state(self, ops, v0, epsilon):
        """``yhat(0) + epsilon v0`` as a nodal vector in ops order."""
        return ops.eval(self.yhat, 0.0) + epsilon * np.asarray(v0, dtype=float)


def nonlinear_term(ops, y, c1, c2, c3):
    """``M (c3 y^3 + c2 y^2 + c1 y) + (G1 y^2 + G2 y^2) / 2`` with entrywise powers."""
    y = np.asarray(y, dtype=float)
    y2 = y * y
    return ops.M @ (c3 * y2 * y + c2 * y2 + c1 * y) + 0.5 * (ops.G1 @ y2 + ops.G2 @ y2)


JACOBIANS = ("exact", "verbatim")


def newton_jacobian(ops, w, c1, c2, c3, A_plus, k, mode="exact"):
    """Derivative of ``F(w) = -A+ w - k N([w; g])_i + H``.

    ``mode="exact"`` uses ``(G1 + G2) diag(w)`` for the convection part.
    ``mode="verbatim"`` takes the literal product ``(G1 + G2) w`` as a
    diagonal, which is only an approximate derivative.
    """
    Mii, G1, G2 = ops.Mb.ii, ops.G1b.ii, ops.G2b.ii
    react = sp.diags(3.0 * c3 * w * w + 2.0 * c2 * w + c1)
    if mode == "exact":
        conv = (G1 + G2) @ sp.diags(w)
    elif mode == "verbatim":
        conv = sp.diags((G1 + G2) @ w)
    else:
        raise ValueError(f"unknown Jacobian mode {mode!r}")
    return -(A_plus + k * (Mii @ react + conv))


def newton_solve(F, J, w0, tol=1e-12, maxit=50):
    """Newton iteration with the three stopping tests.

    Stops when ``|dw|_inf < tol``, ``|dw|_inf / |w|_inf < tol`` or
    ``|F(w)|_inf < tol``.  Returns ``(w, iterations, converged)``.
    """
    w = np.array(w0, dtype=float)
    for it in range(1, maxit + 1):
        dw = solve_general(J(w), -F(w))
        w_new = w + dw
        if not np.all(np.isfinite(w_new)):
            return w_new, it, False
        step = np.max(np.abs(dw), initial=0.0)
        wn = np.max(np.abs(w), initial=0.0)
        w = w_new
        if step < tol or (wn > 0 and step / wn < tol):
            return w, it, True
        if np.max(np.abs(F(w)), initial=0.0) < tol:
            return w, it, True
    return w, maxit, False


def simulate_nonlinear(ops, problem, y0, T, n_steps, scheme="extrapolation", feedback=None,
                       kappa0=None, lam=0.0, newton_tol=1e-12, newton_maxit=50,
                       jacobian="exact"):
    """Integrate the semilinear system on ``[0, T]`` with ``n_steps`` steps.

    ``feedback`` is ``None`` or ``(actuator_set, riccati_path)``; the
    feedback acts on the deviation ``y - yhat``.  ``lam`` only affects the
    reported weighted norms.  Raises :class:`BlowUp` (with the partial
    trajectory attached as ``.trajectory``) or :class:`NewtonDivergence`.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    p = problem
    k = T / n_steps
    N = int(n_steps)
    ni, n = ops.ni, ops.n
    nu = p.nu
    Mb, Sb = ops.Mb, ops.Sb
    A_plus = (2.0 * Mb.ii + k * nu * Sb.ii).tocsr()
    A_minus = (2.0 * Mb.ii - k * nu * Sb.ii).tocsr()
    Aib_plus = (2.0 * Mb.ib + k * nu * Sb.ib).tocsr()
    Aib_minus = (2.0 * Mb.ib - k * nu * Sb.ib).tocsr()
    E_minus = (Mb.ii - k * nu * Sb.ii).tocsr()
    Eb_minus = (Mb.ib - k * nu * Sb.ib).tocsr()

    aset, path = feedback if feedback is not None else (None, None)
    boundary = isinstance(aset, BoundaryActuatorSet)
    if path is not None and (path.n_steps != N or abs(path.k - k) > 1e-12 * k):
        raise ValueError("Riccati path time grid does not match the simulation")

    t = k * np.arange(N + 1)
    yhat = [None] * (N + 1)
    f0 = [None] * (N + 1)

    def ref(j):
        if yhat[j] is None:
            yhat[j] = ops.eval(p.yhat, t[j])
            f0[j] = ops.eval(p.f0, t[j])
        return yhat[j], f0[j]

    Y = np.zeros((n, N + 1))
    Y[:, 0] = y0
    Mc = aset.count if boundary else 0
    kappa = np.zeros((Mc, N + 1)) if boundary else None
    if boundary and path is not None:
        R_design, shift = boundary_design(path, aset)
    if boundary:
        kappa0 = np.zeros(Mc) if kappa0 is None else np.asarray(kappa0, float)
        dev0 = np.asarray(y0, float) - ref(0)[0]
        check_compatibility(ops, aset, dev0, kappa0)
        kappa[:, 0] = kappa0
    norms = np.zeros(N + 1)
    dev_norms = np.zeros(N + 1)
    iters = np.zeros(N + 1, dtype=int)
    norms[0] = norm_h2(ops, Y[:, 0])
    dev_norms[0] = norm_h2(ops, Y[:, 0] - ref(0)[0])
    threshold = BLOWUP_FACTOR * max(norms[0], 1.0)
    traj = Trajectory(t, Y, 0.0, norms, kappa=kappa, newton_iters=iters)
    traj.extra.update(dev_norms=dev_norms, lam=lam)

    def bdata(j):
        g = ref(j)[0][ni:]
        if boundary:
            g = g + aset.psi_traces @ kappa[:, j]
        return g

    def fb_term(j):
        d = Y[:ni, j] - ref(j)[0][:ni]
        Pi = path.Pi[j]
        if boundary:
            w = d - shift @ kappa[:, j]
            return R_design.T @ (Pi[:, :ni] @ w + Pi[:, ni:] @ kappa[:, j])
        R = aset.R_in
        return R @ (R.T @ (Pi @ d))

    N_prev = N_cur = nonlinear_term(ops, Y[:, 0], p.c1, p.c2, p.c3)
    F_prev = F_cur = fb_term(0) if path is not None else None
    for j in range(N):
        yj = Y[:, j]
        if j > 0:
            N_cur = nonlinear_term(ops, yj, p.c1, p.c2, p.c3)
            if path is not None:
                F_cur = fb_term(j)
        if boundary:
            rhs_k = (2.0 - k * aset.varsigma) * kappa[:, j]
            if path is not None:
                rhs_k = rhs_k - k * (3.0 * F_cur - F_prev)
            kappa[:, j + 1] = rhs_k / (2.0 + k * aset.varsigma)
        g_j, g_next = bdata(j), bdata(j + 1)
        _, f_j = ref(j)
        _, f_next = ref(j + 1)
        base = (A_minus @ yj[:ni] - Aib_plus @ g_next + Aib_minus @ g_j
                - k * (ops.M @ (f_next + f_j))[:ni])
        if path is not None and not boundary:
            base -= k * (Mb.ii @ (3.0 * F_cur - F_prev))
        if scheme == "extrapolation":
            yi = solve_spd(A_plus, base - k * (3.0 * N_cur[:ni] - N_prev[:ni]), x0=yj[:ni])
        else:
            guess_rhs = (E_minus @ yj[:ni] + Eb_minus @ g_j - Mb.ib @ g_next
                         - k * (ops.M @ f_j)[:ni] - k * N_cur[:ni])
            guess = solve_spd(Mb.ii, guess_rhs, x0=yj[:ni])
            if scheme == "heun":
                yG = np.concatenate([guess, g_next])
                N_G = nonlinear_term(ops, yG, p.c1, p.c2, p.c3)
                if np.all(np.isfinite(N_G)):
                    yi = solve_spd(A_plus, base - k * (N_G[:ni] + N_cur[:ni]), x0=yj[:ni])
                else:
                    yi = np.full(ni, np.nan)
            else:
                H = base - k * N_cur[:ni]

                def F(w):
                    full = np.concatenate([w, g_next])
                    return -(A_plus @ w) - k * nonlinear_term(ops, full, p.c1, p.c2, p.c3)[:ni] + H

                def J(w):
                    return newton_jacobian(ops, w, p.c1, p.c2, p.c3, A_plus, k, jacobian)

                if not np.all(np.isfinite(guess)):
                    exc = BlowUp(j + 1)
                    exc.trajectory = traj.truncated(j)
                    raise exc
                yi, it, ok = newton_solve(F, J, guess, tol=newton_tol, maxit=newton_maxit)
                iters[j + 1] = it
                if not np.all(np.isfinite(yi)):
                    exc = BlowUp(j + 1)
                    exc.trajectory = traj.truncated(j)
                    raise exc
                if not ok:
                    resid = np.max(np.abs(F(yi)))
                    if resid > 1e-8 * max(1.0, np.max(np.abs(H))):
                        exc = NewtonDivergence(j + 1, it)
                        exc.trajectory = traj.truncated(j)
                        raise exc
                    log.warning("Newton hit the iteration cap at step %d (residual %.2e)",
                                j + 1, resid)
        Y[:ni, j + 1] = yi
        Y[ni:, j + 1] = g_next
        norms[j + 1] = norm_h2(ops, Y[:, j + 1])
        if not np.isfinite(norms[j + 1]) or norms[j + 1] > threshold:
            exc = BlowUp(j + 1, norms[j + 1])
            exc.trajectory = traj.truncated(j)
            raise exc
        dev_norms[j + 1] = norm_h2(ops, Y[:, j + 1] - ref(j + 1)[0])
        N_prev, F_prev = N_cur, F_cur
    traj.extra["yhat"] = np.column_stack([ref(j)[0] for j in range(N + 1)])
    return traj


def deviation_weighted_sup(traj, lam):
    """``sup_j exp(lam t_j) |y^j - yhat^j|^2 / |y^0 - yhat^0|^2``."""
    dev = traj.extra["dev_norms"]
    if dev[0] <= 0:
        raise ValueError("zero initial deviation")
    return float(np.max(np.exp(lam * traj.t) * dev / dev[0]))


def reference_error(ops, traj):
    """Bochner-norm distance between the trajectory and the reference."""
    return spacetime_error(ops, traj.z, traj.extra["yhat"], traj.k)


def indicator_left(ops, cut=-1.0 / 3.0):
    """1 where ``x1 < cut``, 0 elsewhere."""
    return (ops.x1 < cut).astype(float)

