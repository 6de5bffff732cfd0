"""Decay metrics, transient-bound probe and convergence ratios."""

import math

import numpy as np

from .sim_linear import cost_series

STABILIZED_CEILING = 1e4


def weighted_sup(norms, t, lam):
    """``sup_j exp(lam t_j) norms_j / norms_0`` (``inf`` if anything is non-finite)."""
    norms = np.asarray(norms, dtype=float)
    if not norms[0] > 0:
        raise ValueError("initial norm must be positive")
    if not np.all(np.isfinite(norms)):
        return math.inf
    return float(np.max(np.exp(lam * np.asarray(t)) * norms / norms[0]))


def decay_metrics(traj, lam, ceiling=STABILIZED_CEILING, blew_up=False):
    """``weighted_sup``, ``final_ratio`` and ``stabilized`` for a trajectory.

    ``traj.normH2`` holds squared H-norms in original time.  A blown-up or
    non-finite run gets the ``inf`` sentinel.
    """
    norms = traj.normH2
    if blew_up:
        if not norms[0] > 0:
            raise ValueError("initial norm must be positive")
        return {"weighted_sup": math.inf, "final_ratio": math.inf, "stabilized": False}
    sup = weighted_sup(norms, traj.t, lam)
    final = float(norms[-1] / norms[0]) if np.isfinite(sup) else math.inf
    return {"weighted_sup": sup, "final_ratio": final,
            "stabilized": bool(np.isfinite(sup) and sup <= ceiling)}


def m_lambda(norms, lam, k):
    """``max_{i <= j} r_j - r_i`` with ``r_j = lam j k + log(norms_j / norms_0)``.

    Single pass with a running minimum.
    """
    norms = np.asarray(norms, dtype=float)
    if np.any(~(norms > 0)):
        raise ValueError("norms must be positive")
    best = 0.0
    lowest = math.inf
    log0 = math.log(norms[0])
    for j, v in enumerate(norms):
        r = lam * j * k + math.log(v) - log0
        lowest = min(lowest, r)
        best = max(best, r - lowest)
    return best


def convergence_ratios(errors):
    """``errors[i] / errors[i + 1]``."""
    errors = [float(e) for e in errors]
    if len(errors) < 2:
        raise ValueError("need at least two errors")
    if any(not e > 0 for e in errors):
        raise ValueError("errors must be positive")
    return [a / b for a, b in zip(errors[:-1], errors[1:])]


def majority_le(a, b):
    """True when ``a_j <= b_j`` on more than half of the entries."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("series lengths differ")
    return int(np.count_nonzero(a <= b)) * 2 > a.size


__all__ = ["weighted_sup", "decay_metrics", "m_lambda", "convergence_ratios",
           "majority_le", "cost_series", "STABILIZED_CEILING"]
