"""Crank-Nicolson integration of the closed-loop linearized systems.

The integrated system is the shifted one: the reaction coefficient is
``a - lam/2`` so a bounded solution corresponds to decay of the original
system at rate ``lam/2``.  Time-dependent terms (reaction, convection,
feedback) are extrapolated linearly from the two previous time nodes; the
ghost value at ``t = -k`` equals the value at ``t = 0``.
"""

from dataclasses import dataclass, field

import numpy as np

from .actuators import BoundaryActuatorSet
from .errors import BlowUp, CompatibilityViolation
from .fem import apply_reaction_convection, norm_h2, solve_spd
from .riccati import boundary_design


@dataclass(frozen=True)
class ControlSchedule:
    """Feedback is active on the union of half-open ``[a, b)`` intervals."""
    on_intervals: tuple = ((0.0, np.inf),)

    def __post_init__(self):
        iv = tuple((float(a), float(b)) for a, b in self.on_intervals)
        for a, b in iv:
            if not a < b:
                raise ValueError(f"empty interval [{a}, {b})")
        for (a0, b0), (a1, b1) in zip(iv, iv[1:]):
            if a1 < b0:
                raise ValueError("intervals must be sorted and disjoint")
        object.__setattr__(self, "on_intervals", iv)

    @classmethod
    def always(cls):
        return cls(((0.0, np.inf),))

    @classmethod
    def never(cls):
        return cls(())

    def active(self, t):
        return any(a <= t < b for a, b in self.on_intervals)


@dataclass
class Trajectory:
    """Simulated states on the uniform grid ``t_j = j k``.

    ``z`` holds full nodal vectors in ops order (interior first), one column
    per time node, of the simulated (shifted) system.  ``normH2`` is the
    squared norm of the unshifted solution ``exp(-lam t/2) z``;
    ``weighted_normH2`` is the squared norm of ``z`` itself.
    """
    t: np.ndarray
    z: np.ndarray
    lam: float
    norms_sim: np.ndarray
    kappa: np.ndarray = None
    control: np.ndarray = None        # raw actuator coefficients
    control_orth: np.ndarray = None   # orthonormal-basis coefficients
    newton_iters: np.ndarray = None
    extra: dict = field(default_factory=dict)

    @property
    def k(self):
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    @property
    def n_steps(self):
        return len(self.t) - 1

    @property
    def normH2(self):
        return np.exp(-self.lam * self.t) * self.norms_sim

    @property
    def weighted_normH2(self):
        return self.norms_sim

    def truncated(self, last):
        """Copy holding nodes ``0..last`` only."""
        sl = slice(0, last + 1)
        cut = lambda a: None if a is None else a[..., sl]
        return Trajectory(self.t[sl], self.z[:, sl], self.lam, self.norms_sim[sl],
                          cut(self.kappa), cut(self.control), cut(self.control_orth),
                          cut(self.newton_iters), dict(self.extra))


def time_grid(path, T, n_steps):
    if path is not None:
        return path.k, path.n_steps
    if T is None or n_steps is None:
        raise ValueError("T and n_steps are required without a Riccati path")
    return T / n_steps, int(n_steps)


def _blowup(traj, j):
    exc = BlowUp(j)
    exc.trajectory = traj.truncated(j - 1) if j > 0 else None
    return exc


class _Stepper:
    """Shared Crank-Nicolson matrices for one (ops, nu, k)."""

    def __init__(self, ops, nu, k):
        self.ops = ops
        self.k = k
        self.nu = nu
        Mb, Sb = ops.Mb, ops.Sb
        self.A_plus = (2.0 * Mb.ii + k * nu * Sb.ii).tocsr()
        self.A_minus = (2.0 * Mb.ii - k * nu * Sb.ii).tocsr()
        self.Aib_plus = (2.0 * Mb.ib + k * nu * Sb.ib).tocsr()
        self.Aib_minus = (2.0 * Mb.ib - k * nu * Sb.ib).tocsr()

    def L_apply(self, coeff, lam, t, full):
        a, b1, b2 = coeff.at(self.ops, t)
        return apply_reaction_convection(self.ops, a - lam / 2.0, b1, b2, full)[:self.ops.ni]


def simulate_internal(ops, coeff, aset, path, lam, nu, z0, schedule=None, T=None,
                      n_steps=None):
    """Internally controlled closed loop.  ``path=None`` runs without feedback."""
    k, N = time_grid(path, T, n_steps)
    schedule = ControlSchedule.always() if schedule is None else schedule
    ni, n = ops.ni, ops.n
    z0 = np.asarray(z0, dtype=float)
    if np.max(np.abs(z0[ni:]), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(z0))):
        raise CompatibilityViolation(float(np.max(np.abs(z0[ni:]))))
    st = _Stepper(ops, nu, k)
    Mii = ops.Mb.ii
    R = None if aset is None else aset.R_in
    Mcount = 0 if R is None else R.shape[1]

    Z = np.zeros((n, N + 1))
    Z[:ni, 0] = z0[:ni]
    t = k * np.arange(N + 1)
    norms = np.zeros(N + 1)
    norms[0] = norm_h2(ops, Z[:, 0])
    u_orth = np.zeros((Mcount, N + 1))
    traj = Trajectory(t, Z, lam, norms, control_orth=u_orth)

    def feedback(j, zi):
        # returns (R R^T Pi z, -R^T Pi z)
        c = R.T @ (path.Pi[j] @ zi)
        return R @ c, -c

    L_prev = st.L_apply(coeff, lam, 0.0, Z[:, 0])
    F_prev = None
    if path is not None:
        F_prev, u_orth[:, 0] = feedback(0, Z[:ni, 0])
    L_cur, F_cur = L_prev, F_prev
    for j in range(N):
        zi = Z[:ni, j]
        if j > 0:
            L_cur = st.L_apply(coeff, lam, t[j], Z[:, j])
            if path is not None:
                F_cur, u_orth[:, j] = feedback(j, zi)
        rhs = st.A_minus @ zi - k * (3.0 * L_cur - L_prev)
        if path is not None and schedule.active((j + 0.5) * k):
            rhs -= k * (Mii @ (3.0 * F_cur - F_prev))
        Z[:ni, j + 1] = solve_spd(st.A_plus, rhs, x0=zi)
        norms[j + 1] = norm_h2(ops, Z[:, j + 1])
        if not np.isfinite(norms[j + 1]):
            raise _blowup(traj, j + 1)
        L_prev, F_prev = L_cur, F_cur
    if path is not None:
        u_orth[:, N] = feedback(N, Z[:ni, N])[1]
        on = np.array([schedule.active(tt) for tt in t])
        u_orth[:, ~on] = 0.0
        traj.control = np.asarray(aset.raw_coefficients(u_orth))
    return traj


def check_compatibility(ops, aset, z0, kappa0):
    trace = np.asarray(z0, float)[ops.ni:]
    expected = aset.psi_traces @ np.asarray(kappa0, float)
    mismatch = float(np.max(np.abs(trace - expected), initial=0.0))
    scale = max(1.0, float(np.max(np.abs(trace), initial=0.0)))
    if mismatch > 1e-10 * scale:
        raise CompatibilityViolation(mismatch)


def _interior_update(st, coeff, lam, aset, t, j, Z, kappa, L_prev, L_cur):
    """Interior values at ``j+1`` given ``kappa^{j+1}`` (shared with replay)."""
    k, ni = st.k, st.ops.ni
    B = aset.psi_traces
    bk_next = B @ kappa[:, j + 1]
    bk = Z[ni:, j]
    full_next_b = np.concatenate([np.zeros(ni), bk_next])
    full_b = np.concatenate([np.zeros(ni), bk])
    Lib_next = st.L_apply(coeff, lam, t[j + 1], full_next_b)
    Lib = st.L_apply(coeff, lam, t[j], full_b)
    rhs = (st.A_minus @ Z[:ni, j]
           - (st.Aib_plus @ bk_next + k * Lib_next)
           + (st.Aib_minus @ bk - k * Lib)
           - 3.0 * k * L_cur + k * L_prev)
    Z[:ni, j + 1] = solve_spd(st.A_plus, rhs, x0=Z[:ni, j])
    Z[ni:, j + 1] = bk_next


def simulate_boundary(ops, coeff, aset, path, lam, nu, z0, kappa0, schedule=None, T=None,
                      n_steps=None):
    """Boundary-controlled closed loop through the extended system."""
    if not isinstance(aset, BoundaryActuatorSet):
        raise TypeError("boundary actuator set required")
    k, N = time_grid(path, T, n_steps)
    schedule = ControlSchedule.always() if schedule is None else schedule
    ni, n, Mc = ops.ni, ops.n, aset.count
    z0 = np.asarray(z0, dtype=float)
    kappa0 = np.asarray(kappa0, dtype=float)
    check_compatibility(ops, aset, z0, kappa0)
    st = _Stepper(ops, nu, k)
    vs = aset.varsigma - lam / 2.0
    if path is not None:
        R, shift = boundary_design(path, aset)

    Z = np.zeros((n, N + 1))
    Z[:ni, 0] = z0[:ni]
    Z[ni:, 0] = aset.psi_traces @ kappa0
    kappa = np.zeros((Mc, N + 1))
    kappa[:, 0] = kappa0
    t = k * np.arange(N + 1)
    norms = np.zeros(N + 1)
    norms[0] = norm_h2(ops, Z[:, 0])
    traj = Trajectory(t, Z, lam, norms, kappa=kappa)

    def Fb(j):
        w = Z[:ni, j] - shift @ kappa[:, j]
        Pi = path.Pi[j]
        v = Pi[:, :ni] @ w + Pi[:, ni:] @ kappa[:, j]
        return R.T @ v

    def L_int(j):
        full = np.concatenate([Z[:ni, j], np.zeros(n - ni)])
        return st.L_apply(coeff, lam, t[j], full)

    L_prev = L_cur = L_int(0)
    F_prev = F_cur = Fb(0) if path is not None else None
    for j in range(N):
        if j > 0:
            L_cur = L_int(j)
            if path is not None:
                F_cur = Fb(j)
        rhs_k = (2.0 - k * vs) * kappa[:, j]
        if path is not None and schedule.active((j + 0.5) * k):
            rhs_k = rhs_k - k * (3.0 * F_cur - F_prev)
        kappa[:, j + 1] = rhs_k / (2.0 + k * vs)
        _interior_update(st, coeff, lam, aset, t, j, Z, kappa, L_prev, L_cur)
        norms[j + 1] = norm_h2(ops, Z[:, j + 1])
        if not (np.isfinite(norms[j + 1]) and np.all(np.isfinite(kappa[:, j + 1]))):
            raise _blowup(traj, j + 1)
        L_prev, F_prev = L_cur, F_cur
    return traj


def replay_open_loop(ops, coeff, aset, kappa_history, lam, nu, z0, T=None, n_steps=None):
    """Integrate the boundary system with a prescribed ``kappa`` history."""
    kappa = np.array(kappa_history, dtype=float)
    if kappa.ndim != 2 or kappa.shape[0] != aset.count:
        raise ValueError("kappa history must have one row per actuator")
    if n_steps is not None and kappa.shape[1] != n_steps + 1:
        raise ValueError(f"kappa history needs {n_steps + 1} columns, got {kappa.shape[1]}")
    N = kappa.shape[1] - 1
    k = T / N
    ni, n = ops.ni, ops.n
    z0 = np.asarray(z0, dtype=float)
    check_compatibility(ops, aset, z0, kappa[:, 0])
    st = _Stepper(ops, nu, k)
    Z = np.zeros((n, N + 1))
    Z[:ni, 0] = z0[:ni]
    Z[ni:, 0] = aset.psi_traces @ kappa[:, 0]
    t = k * np.arange(N + 1)
    norms = np.zeros(N + 1)
    norms[0] = norm_h2(ops, Z[:, 0])
    traj = Trajectory(t, Z, lam, norms, kappa=kappa)

    def L_int(j):
        full = np.concatenate([Z[:ni, j], np.zeros(n - ni)])
        return st.L_apply(coeff, lam, t[j], full)

    L_prev = L_cur = L_int(0)
    for j in range(N):
        if j > 0:
            L_cur = L_int(j)
        _interior_update(st, coeff, lam, aset, t, j, Z, kappa, L_prev, L_cur)
        norms[j + 1] = norm_h2(ops, Z[:, j + 1])
        if not np.isfinite(norms[j + 1]):
            raise _blowup(traj, j + 1)
        L_prev = L_cur
    return traj


def cost_series(path, traj, aset=None):
    """``zbar^T Pi^j zbar`` per time node.

    For boundary runs the state is ``[z_i - B kappa; kappa]``, the variable
    the Riccati matrix acts on.
    """
    if len(path.Pi) != len(traj.t):
        raise ValueError("Riccati path and trajectory use different time grids")
    out = np.zeros(len(traj.t))
    for j in range(len(traj.t)):
        Pi = path.Pi[j]
        if traj.kappa is None:
            w = traj.z[:Pi.shape[0], j]
        else:
            m = traj.kappa.shape[0]
            nint = Pi.shape[0] - m
            zi = traj.z[:nint, j]
            B = boundary_design(path, aset)[1] if aset is not None else np.zeros((nint, m))
            w = np.concatenate([zi - B @ traj.kappa[:, j], traj.kappa[:, j]])
        out[j] = w @ (Pi @ w)
    return out
