from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp

from parastab.actuators import build_boundary_actuators, build_internal_actuators
from parastab.analysis import weighted_sup
from parastab.errors import CompatibilityViolation
from parastab.fem import CoefficientField
from parastab.expr import parse_expr
from parastab.riccati import boundary_problem, internal_problem, solve_path
from parastab.sim_linear import (ControlSchedule, _Stepper, cost_series, replay_open_loop,
                                 simulate_boundary, simulate_internal)

NU = 0.25
ZERO = CoefficientField(0.0, 0.0, 0.0)
# reaction -4 with lam = 2 makes the shifted system clearly unstable on the unit disk
UNSTABLE = CoefficientField(parse_expr("-4"), parse_expr("x2"), parse_expr("-x1"))
# milder field for the boundary tests: one unstable mode after the shift
UNSTABLE_B = CoefficientField(parse_expr("-2"), parse_expr("x2"), parse_expr("-x1"))
T_B, N_B = 4.0, 80


def bump(ops):
    """Smooth interior initial state vanishing on the boundary."""
    return np.where(np.arange(ops.n) < ops.ni, 1.0 - ops.x1 ** 2 - ops.x2 ** 2, 0.0) * (1 + ops.x1)


@pytest.fixture(scope="module")
def internal_setup(ops6):
    aset = build_internal_actuators(ops6)
    prob = internal_problem(ops6, UNSTABLE, aset, lam=2.0, nu=NU, T=2.0, n_steps=40)
    return aset, solve_path(prob)


@pytest.fixture(scope="module")
def boundary_setup(ops6):
    aset = build_boundary_actuators(ops6, M=3, varsigma=10.0, nu=NU)
    prob = boundary_problem(ops6, UNSTABLE_B, aset, lam=2.0, nu=NU, T=T_B, n_steps=N_B)
    return aset, solve_path(prob)


# ------------------------------------------------------------------ schedules

def test_schedule_semantics():
    s = ControlSchedule(((0, 3), (4, 8)))
    assert s.active(0.0) and s.active(2.999) and not s.active(3.0)
    assert not s.active(3.5) and s.active(4.0) and not s.active(8.0)
    assert ControlSchedule.always().active(1e9)
    assert not ControlSchedule.never().active(0.0)


@pytest.mark.parametrize("bad", [((1, 1),), ((2, 1),), ((0, 3), (2, 5))])
def test_schedule_rejects_bad_intervals(bad):
    with pytest.raises(ValueError):
        ControlSchedule(bad)


# ------------------------------------------------------------------ internal

def test_stepper_matrix_substitution():
    eye = sp.identity(3, format="csr")
    zero = sp.csr_matrix((3, 1))
    blk = SimpleNamespace(ii=eye, ib=zero)
    st = _Stepper(SimpleNamespace(Mb=blk, Sb=blk), nu=0.25, k=0.1)
    assert np.allclose(st.A_plus.toarray(), 2.025 * np.eye(3))
    assert np.allclose(st.A_minus.toarray(), 1.975 * np.eye(3))


def test_internal_zero_state_stays_zero(ops4):
    traj = simulate_internal(ops4, ZERO, None, None, 0.0, NU, np.zeros(ops4.n), T=1.0, n_steps=10)
    assert not np.any(traj.z)
    assert not np.any(traj.norms_sim)


def test_internal_heat_decay_strict(ops4):
    traj = simulate_internal(ops4, ZERO, None, None, 0.0, NU, bump(ops4), T=2.0, n_steps=20)
    assert np.all(np.diff(traj.normH2) < 0)
    assert np.allclose(traj.normH2, traj.weighted_normH2)


def test_internal_trajectory_invariants(ops6, internal_setup):
    aset, path = internal_setup
    z0 = bump(ops6)
    traj = simulate_internal(ops6, UNSTABLE, aset, path, 2.0, NU, z0)
    assert np.array_equal(traj.z[:, 0], z0)
    assert not np.any(traj.z[ops6.ni:])
    assert np.all(np.isfinite(traj.z))
    assert np.allclose(traj.normH2, np.exp(-2.0 * traj.t) * traj.weighted_normH2)
    assert traj.control.shape == (aset.count, 41)


def test_internal_feedback_stabilizes(ops6, internal_setup):
    aset, path = internal_setup
    z0 = bump(ops6)
    closed = simulate_internal(ops6, UNSTABLE, aset, path, 2.0, NU, z0)
    opened = simulate_internal(ops6, UNSTABLE, aset, path, 2.0, NU, z0,
                               schedule=ControlSchedule.never())
    assert weighted_sup(closed.normH2, closed.t, 2.0) < 10.0
    assert opened.weighted_normH2[-1] > 10.0 * opened.weighted_normH2[0]
    assert not np.any(opened.control)


def test_internal_never_schedule_equals_no_feedback(ops6, internal_setup):
    aset, path = internal_setup
    z0 = bump(ops6)
    off = simulate_internal(ops6, UNSTABLE, aset, path, 2.0, NU, z0,
                            schedule=ControlSchedule.never())
    free = simulate_internal(ops6, UNSTABLE, None, None, 2.0, NU, z0, T=2.0, n_steps=40)
    assert np.array_equal(off.z, free.z)


def test_internal_cost_series_is_positive(ops6, internal_setup):
    aset, path = internal_setup
    traj = simulate_internal(ops6, UNSTABLE, aset, path, 2.0, NU, bump(ops6))
    cost = cost_series(path, traj)
    assert np.all(cost > 0)


def test_internal_rejects_boundary_values(ops4):
    z0 = np.ones(ops4.n)
    with pytest.raises(CompatibilityViolation):
        simulate_internal(ops4, ZERO, None, None, 0.0, NU, z0, T=1.0, n_steps=4)


def test_internal_requires_time_grid(ops4):
    with pytest.raises(ValueError):
        simulate_internal(ops4, ZERO, None, None, 0.0, NU, np.zeros(ops4.n))


# ------------------------------------------------------------------ boundary

def test_boundary_zero_state_stays_zero(ops6):
    aset = build_boundary_actuators(ops6, M=3, varsigma=10.0, nu=NU)
    traj = simulate_boundary(ops6, ZERO, aset, None, 0.0, NU, np.zeros(ops6.n), np.zeros(3),
                             T=1.0, n_steps=10)
    assert not np.any(traj.z) and not np.any(traj.kappa)


def test_boundary_kappa_recurrence_without_feedback(ops6):
    aset = build_boundary_actuators(ops6, M=3, varsigma=10.0, nu=NU)
    kappa0 = np.array([1.0, -0.5, 0.25])
    z0 = np.zeros(ops6.n)
    z0[ops6.ni:] = aset.psi_traces @ kappa0
    k, vs = 0.05, 10.0
    traj = simulate_boundary(ops6, ZERO, aset, None, 0.0, NU, z0, kappa0, T=1.0, n_steps=20)
    ratio = (2 - k * vs) / (2 + k * vs)
    expected = kappa0[:, None] * ratio ** np.arange(21)[None, :]
    assert np.allclose(traj.kappa, expected, rtol=1e-13, atol=1e-15)
    # boundary rows follow the actuator traces
    assert np.allclose(traj.z[ops6.ni:], aset.psi_traces @ traj.kappa)


def test_boundary_schedule_window_reverts_to_free_recurrence(ops6, boundary_setup):
    aset, path = boundary_setup
    kappa0 = np.zeros(3)
    sched = ControlSchedule(((0.0, 0.8), (1.2, 2.0)))
    traj = simulate_boundary(ops6, UNSTABLE_B, aset, path, 2.0, NU, bump(ops6), kappa0, sched)
    k = path.k
    vs = aset.varsigma - 1.0
    ratio = (2 - k * vs) / (2 + k * vs)
    window = [j for j in range(path.n_steps) if 0.8 <= (j + 0.5) * k < 1.2]
    assert window
    for j in window:
        assert np.allclose(traj.kappa[:, j + 1], ratio * traj.kappa[:, j], rtol=1e-12, atol=1e-14)
    # feedback is genuinely active elsewhere
    assert np.any(np.abs(traj.kappa[:, 5]) > 0)


def test_boundary_feedback_stabilizes(ops6, boundary_setup):
    aset, path = boundary_setup
    z0 = bump(ops6)
    closed = simulate_boundary(ops6, UNSTABLE_B, aset, path, 2.0, NU, z0, np.zeros(3))
    opened = simulate_boundary(ops6, UNSTABLE_B, aset, None, 2.0, NU, z0, np.zeros(3),
                               T=T_B, n_steps=N_B)
    assert weighted_sup(closed.normH2, closed.t, 2.0) < 100.0
    assert closed.weighted_normH2[-1] < closed.weighted_normH2[0]
    assert opened.weighted_normH2[-1] > 100.0 * opened.weighted_normH2[0]
    assert np.all(np.isfinite(cost_series(path, closed, aset)))


def test_boundary_compatibility_violation(ops6):
    aset = build_boundary_actuators(ops6, M=3, varsigma=10.0, nu=NU)
    z0 = np.zeros(ops6.n)
    z0[ops6.ni:] = 1.0
    with pytest.raises(CompatibilityViolation):
        simulate_boundary(ops6, ZERO, aset, None, 0.0, NU, z0, np.zeros(3), T=1.0, n_steps=4)


def test_boundary_requires_boundary_set(ops6):
    aset = build_internal_actuators(ops6)
    with pytest.raises(TypeError):
        simulate_boundary(ops6, ZERO, aset, None, 0.0, NU, np.zeros(ops6.n), np.zeros(6),
                          T=1.0, n_steps=4)


# ------------------------------------------------------------------ replay

def test_replay_is_bit_identical(ops6, boundary_setup):
    aset, path = boundary_setup
    z0 = bump(ops6)
    closed = simulate_boundary(ops6, UNSTABLE_B, aset, path, 2.0, NU, z0, np.zeros(3))
    again = replay_open_loop(ops6, UNSTABLE_B, aset, closed.kappa, 2.0, NU, z0, T=T_B,
                             n_steps=N_B)
    assert np.array_equal(again.z, closed.z)
    assert np.array_equal(again.norms_sim, closed.norms_sim)


def test_replay_on_perturbed_state_is_not_stabilizing(ops6, boundary_setup):
    aset, path = boundary_setup
    z0 = bump(ops6)
    closed = simulate_boundary(ops6, UNSTABLE_B, aset, path, 2.0, NU, z0, np.zeros(3))
    # along the unstable principal mode
    pert = z0 + 0.5 * np.where(np.arange(ops6.n) < ops6.ni, 1.0 - ops6.x1 ** 2 - ops6.x2 ** 2, 0.0)
    replay = replay_open_loop(ops6, UNSTABLE_B, aset, closed.kappa, 2.0, NU, pert, T=T_B)
    fresh = simulate_boundary(ops6, UNSTABLE_B, aset, path, 2.0, NU, pert, np.zeros(3))
    assert replay.weighted_normH2[-1] > 10.0 * fresh.weighted_normH2[-1]


def test_replay_zero_history_zero_state(ops6):
    aset = build_boundary_actuators(ops6, M=3, varsigma=10.0, nu=NU)
    traj = replay_open_loop(ops6, UNSTABLE_B, aset, np.zeros((3, 11)), 2.0, NU, np.zeros(ops6.n),
                            T=1.0, n_steps=10)
    assert not np.any(traj.z)


def test_replay_length_errors(ops6):
    aset = build_boundary_actuators(ops6, M=3, varsigma=10.0, nu=NU)
    with pytest.raises(ValueError, match="11 columns"):
        replay_open_loop(ops6, ZERO, aset, np.zeros((3, 10)), 0.0, NU, np.zeros(ops6.n),
                         T=1.0, n_steps=10)
    with pytest.raises(ValueError, match="one row per actuator"):
        replay_open_loop(ops6, ZERO, aset, np.zeros((2, 11)), 0.0, NU, np.zeros(ops6.n), T=1.0)
