"""Algebraic and differential Riccati solvers and the feedback matrices.

The Riccati equations are posed as

    Pi X + X^T Pi - Pi G Pi + Q = 0,    G = R R^T,

and solved with Newton-Kleinman iterations on dense Lyapunov equations.
"""

from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
import scipy.linalg as sla

from .actuators import BoundaryActuatorSet
from .errors import (HomotopyFailure, LossOfPositivity, MaxIterations, NoStabilizingSeed,
                     RiccatiStepFailure, SimulationError, SingularLyapunov)
from .fem import apply_reaction_convection

log = logging.getLogger(__name__)

ARE_RTOL = 1e-8
NK_MAXIT = 100


def _sym(P):
    return 0.5 * (P + P.T)


def spectral_abscissa(A):
    return float(np.max(np.linalg.eigvals(A).real))


def solve_lyapunov(A, Q):
    """Solve ``A^T P + P A + Q = 0`` (Bartels-Stewart)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    with warnings.catch_warnings():
        # scipy perturbs the data when two eigenvalues nearly cancel
        warnings.simplefilter("error", RuntimeWarning)
        try:
            P = sla.solve_continuous_lyapunov(A.T, -Q)
        except RuntimeWarning as exc:
            raise SingularLyapunov(str(exc)) from None
    if not np.all(np.isfinite(P)):
        raise SingularLyapunov("non-finite Lyapunov solution")
    P = _sym(P)
    res = np.linalg.norm(A.T @ P + P @ A + Q)
    scale = np.linalg.norm(Q) + np.linalg.norm(A) * np.linalg.norm(P)
    if res > 1e-10 * max(scale, np.finfo(float).tiny):
        raise SingularLyapunov(f"Lyapunov residual {res:.3e} too large")
    return P


def are_residual(Pi, X, G, Q):
    return Pi @ X + X.T @ Pi - Pi @ G @ Pi + Q


def initial_seed(X, G):
    """A symmetric ``Pi0`` making ``X - G Pi0`` stable.

    Zero when ``X`` is already stable.  Otherwise, for invertible ``G`` the
    shift seed ``sigma G^{-1}`` with ``sigma`` = spectral abscissa + 1 gives
    ``X - G Pi0 = X - sigma I``; for singular ``G`` the Bass construction is
    used.
    """
    n = X.shape[0]
    alpha = spectral_abscissa(X)
    if alpha < 0:
        return np.zeros((n, n))
    sigma = alpha + 1.0
    if np.linalg.cond(G) < 1e10:
        return _sym(sigma * np.linalg.inv(G))
    beta = max(-float(np.min(np.linalg.eigvals(X).real)), 0.0) + 1.0
    As = X + beta * np.eye(n)
    # As Z + Z As^T = 2 G with -As stable gives Z > 0 for controllable pairs
    Z = sla.solve_continuous_lyapunov(-As, -2.0 * G)
    try:
        return _sym(np.linalg.inv(_sym(Z)))
    except np.linalg.LinAlgError:
        raise NoStabilizingSeed("Bass seed: singular Gramian") from None


@dataclass
class AreInfo:
    iterations: int = 0
    residual: float = np.nan
    history: list = field(default_factory=list)


def solve_are(X, R=None, Q=None, seed=None, G=None, rtol=ARE_RTOL, maxit=NK_MAXIT,
              info=None, keep_history=False, check_seed=True):
    """Stabilizing solution of ``Pi X + X^T Pi - Pi R R^T Pi + Q = 0``.

    Newton-Kleinman from ``seed`` (see :func:`initial_seed` when omitted).
    With ``check_seed=False`` the stability test of the seed is skipped and
    only convergence of the residual is verified.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if G is None:
        R = np.zeros((n, 0)) if R is None else np.atleast_2d(np.asarray(R, dtype=float))
        if R.shape[0] != n:
            R = R.reshape(n, -1)
        G = R @ R.T
    G = np.atleast_2d(np.asarray(G, dtype=float))
    Q = _sym(np.atleast_2d(np.asarray(Q, dtype=float)))
    Pi = initial_seed(X, G) if seed is None else _sym(np.atleast_2d(np.asarray(seed, float)))
    if check_seed and spectral_abscissa(X - G @ Pi) >= 0:
        raise NoStabilizingSeed("seed does not stabilize X - G Pi")
    info = AreInfo() if info is None else info
    tol = rtol * max(1.0, np.linalg.norm(Q))
    res = np.inf
    for it in range(1, maxit + 1):
        Ak = X - G @ Pi
        try:
            Pn = solve_lyapunov(Ak, Q + Pi @ G @ Pi)
        except (SingularLyapunov, ValueError, np.linalg.LinAlgError) as exc:
            raise NoStabilizingSeed(f"Newton-Kleinman step {it}: {exc}") from None
        step = np.linalg.norm(Pn - Pi)
        Pi = Pn
        if keep_history:
            info.history.append(Pi.copy())
        res = np.linalg.norm(are_residual(Pi, X, G, Q))
        info.iterations, info.residual = it, res
        if res <= tol:
            return Pi
        if step <= 1e-15 * max(1.0, np.linalg.norm(Pi)):
            break
    raise MaxIterations(info.iterations, res)


def homotopy_input(H0, R, tau):
    """``(1 - tau)^2 H0 + tau^2 [R 0]``."""
    H0 = np.atleast_2d(H0)
    R = np.atleast_2d(R)
    padded = np.zeros_like(H0, dtype=float)
    padded[:, :R.shape[1]] = R
    return (1.0 - tau) ** 2 * H0 + tau ** 2 * padded


def homotopy_init(X, R, Q, H0, steps=8, max_steps=64):
    """Solve the ARE for input ``R`` by continuation from input ``H0``.

    The chain ``tau = 0, 1/N, ..., 1`` solves each ARE seeded by the previous
    solution; the step count doubles on failure up to ``max_steps``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N = max(1, int(steps))
    last = None
    while True:
        try:
            Pi = None
            for s in range(N + 1):
                tau = s / N
                H = homotopy_input(H0, R, tau)
                try:
                    Pi = solve_are(X, Q=Q, G=H @ H.T, seed=Pi)
                except SimulationError as exc:
                    raise HomotopyFailure(tau, exc) from None
            return Pi
        except HomotopyFailure as exc:
            last = exc
            log.info("homotopy with %d steps failed at tau=%g", N, exc.tau)
            if N >= max_steps:
                raise last
            N = min(2 * N, max_steps)


@dataclass
class RiccatiProblem:
    """Data of ``dPi/dt + Pi X + X^T Pi - Pi R R^T Pi + C^T C = 0``.

    ``X`` is a callable of the time index ``j`` (0..n_steps) or a constant
    matrix.
    """
    X: object
    R: np.ndarray
    C: np.ndarray
    k: float
    n_steps: int
    H0: np.ndarray = None
    # boundary problems: the state is (z_i - shift kappa, kappa)
    shift: np.ndarray = None

    @property
    def stationary(self):
        return not callable(self.X)

    def X_at(self, j):
        return self.X(j) if callable(self.X) else self.X

    @property
    def Q(self):
        return self.C.T @ self.C

    @property
    def G(self):
        return self.R @ self.R.T


@dataclass
class RiccatiPath:
    Pi: list
    k: float
    residuals: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    substeps: list = field(default_factory=list)
    R: np.ndarray = None
    shift: np.ndarray = None

    @property
    def n_steps(self):
        return len(self.Pi) - 1

    @classmethod
    def constant(cls, Pi, k, n_steps):
        return cls([Pi] * (n_steps + 1), k)

    def metadata_rows(self):
        subs = self.substeps or [1] * len(self.residuals)
        for j, (r, it, m) in enumerate(zip(self.residuals, self.iterations, subs)):
            yield j, r, it, m


def check_spd(Pi, step):
    if np.linalg.norm(Pi - Pi.T) > 1e-9 * max(np.linalg.norm(Pi), 1e-300):
        raise LossOfPositivity(step)
    try:
        np.linalg.cholesky(Pi)
    except np.linalg.LinAlgError:
        raise LossOfPositivity(step) from None


def _cn_step(Pi_next, X_next, Xj, G, Q, k, step):
    """One Crank-Nicolson step of length ``k`` from ``Pi_next`` back to the SPD ``Pi``."""
    n = G.shape[0]
    At = Xj - np.eye(n) / k
    Qt = (2.0 * Q + (2.0 / k) * Pi_next + Pi_next @ X_next + X_next.T @ Pi_next
          - Pi_next @ G @ Pi_next)
    info = AreInfo()
    try:
        Pi = solve_are(At, Q=Qt, G=G, seed=Pi_next, info=info, check_seed=False)
    except SimulationError as exc:
        raise RiccatiStepFailure(step, exc) from None
    check_spd(Pi, step)
    return Pi, info


def solve_dre_backward(problem, Pi_T, max_substeps=64):
    """Crank-Nicolson sweep from ``Pi^N = Pi_T`` down to ``Pi^0``.

    Averaging the right-hand side at ``t_j`` and ``t_{j+1}`` turns each step
    into the ARE ``Pi A + A^T Pi - Pi G Pi + Qt = 0`` with
    ``A = X^j - I/k`` and
    ``Qt = 2 C^T C + (2/k) Pi^{j+1} + Pi^{j+1} X^{j+1} + X^{j+1}^T Pi^{j+1} - Pi^{j+1} G Pi^{j+1}``.

    ``Qt`` can be indefinite when ``X`` varies quickly relative to ``k``, and
    then so can the step result.  A failed step is retried on 2, 4, ...,
    ``max_substeps`` equal substeps of ``[t_j, t_{j+1}]`` (``X`` evaluated at
    the fractional indices); ``path.substeps[j]`` records the count used.
    """
    k, N = problem.k, problem.n_steps
    G, Q = problem.G, problem.Q
    Pi_next = _sym(np.asarray(Pi_T, dtype=float))
    check_spd(Pi_next, N)
    path = [None] * (N + 1)
    path[N] = Pi_next
    residuals = [0.0] * (N + 1)
    iterations = [0] * (N + 1)
    substeps = [1] * (N + 1)
    X_next = problem.X_at(N)
    for j in range(N - 1, -1, -1):
        Xj = problem.X_at(j)
        m = 1
        while True:
            try:
                if m == 1:
                    Pi, info = _cn_step(Pi_next, X_next, Xj, G, Q, k, j)
                else:
                    P, Xn = Pi_next, X_next
                    for i in range(m - 1, -1, -1):
                        Xi = Xj if i == 0 else problem.X_at(j + i / m)
                        P, info = _cn_step(P, Xn, Xi, G, Q, k / m, j)
                        Xn = Xi
                    Pi = P
                break
            except (LossOfPositivity, RiccatiStepFailure):
                if problem.stationary or 2 * m > max_substeps:
                    raise
                m *= 2
                log.info("Riccati step %d retried with %d substeps", j, m)
        path[j] = Pi
        residuals[j], iterations[j], substeps[j] = info.residual, info.iterations, m
        Pi_next, X_next = Pi, Xj
    return RiccatiPath(path, k, residuals, iterations, substeps)


def feedback_internal(Pi, R):
    """``F = R R^T Pi``."""
    return R @ (R.T @ Pi)


def boundary_design(path, aset):
    """Input matrix and state shift the boundary feedback was designed with.

    Paths from :func:`boundary_problem` carry their own; otherwise the
    actuator set's ``R_bo`` and ``B_psi_bar`` are used.
    """
    R = getattr(path, "R", None)
    shift = getattr(path, "shift", None)
    if R is None or shift is None:
        return aset.R_bo, aset.B_psi_bar
    return R, shift


def feedback_boundary(Pi, aset, R=None, shift=None):
    """Row-selected boundary feedback ``[0 I] R R^T Pi [[I, -B], [0, I]]``.

    ``[0 I] R = I``, so the product reduces to ``R^T Pi`` followed by the
    change of variables.  ``R`` and ``B`` default to the set's ``R_bo`` and
    ``B_psi_bar``.
    """
    R = aset.R_bo if R is None else R
    B = aset.B_psi_bar if shift is None else shift
    ni = B.shape[0]
    A = R.T @ Pi
    out = A.copy()
    out[:, ni:] = A[:, ni:] - A[:, :ni] @ B
    return out


def feedback_matrix(Pi, aset, path=None):
    if isinstance(aset, BoundaryActuatorSet):
        return feedback_boundary(Pi, aset, *boundary_design(path, aset))
    return feedback_internal(Pi, aset.R_in)


class StateOperators:
    """Dense blocks used to assemble the Riccati state matrices.

    ``K_r(t)_ii = [M^{-1}(G1 D_b1 + G2 D_b2)]_ii + D_{a - r/2}`` is evaluated
    through the precomputed products ``P_k = (M^{-1})_{i,:} (G_k)_{:,i}``.
    """

    def __init__(self, ops, nu):
        ni = ops.ni
        Md = ops.M_dense
        E = np.zeros((ops.n, ni))
        E[np.arange(ni), np.arange(ni)] = 1.0
        Minv_rows = sla.cho_solve(sla.cho_factor(Md), E).T
        self.ni = ni
        self.nu = nu
        self.P1 = Minv_rows @ ops.G1[:, :ni].toarray()
        self.P2 = Minv_rows @ ops.G2[:, :ni].toarray()
        Mii = ops.Mb.ii.toarray()
        self.diffusion = -nu * sla.cho_solve(sla.cho_factor(Mii), ops.Sb.ii.toarray())
        self.L_M = ops.M_ii_chol
        self.L_S = ops.S_ii_chol

    def K(self, a_i, b1_i, b2_i, r):
        return self.P1 * b1_i + self.P2 * b2_i + np.diag(a_i - r / 2.0)

    def X_internal(self, a_i, b1_i, b2_i, lam):
        return self.diffusion - self.K(a_i, b1_i, b2_i, lam)

    def C_internal(self, observation="h1"):
        if observation == "h1":
            return np.sqrt(self.nu) * self.L_S.T
        if observation == "l2":
            return self.L_M.T
        raise ValueError(f"unknown observation {observation!r}")

    def H0_internal(self):
        # H0 H0^T = M_ii^{-1}
        return sla.solve_triangular(self.L_M, np.eye(self.ni), lower=True).T


def internal_problem(ops, coeff, aset, lam, nu, T, n_steps, observation="h1"):
    """Riccati data for the internally controlled linearized system."""
    st = StateOperators(ops, nu)
    ni = ops.ni
    k = T / n_steps

    def X_of(j):
        a, b1, b2 = coeff.at(ops, j * k)
        return st.X_internal(a[:ni], b1[:ni], b2[:ni], lam)

    X = X_of(0) if coeff.stationary else X_of
    return RiccatiProblem(X=X, R=aset.R_in, C=st.C_internal(observation), k=k,
                          n_steps=n_steps, H0=st.H0_internal())


def boundary_problem(ops, coeff, aset, lam, nu, T, n_steps, observation="h1",
                     model="consistent"):
    """Riccati data for the extended boundary-controlled system.

    ``model="consistent"`` (default) is the exact change of variables
    ``y = z_i - E kappa`` (``E`` the interior rows of the extensions) applied
    to the simulated equations.  Because ``(nu S + varsigma M) Psi~ = 0`` on
    interior rows, ``y`` obeys

        y' = X_ii y + (2 varsigma B - M_ii^{-1} L_0 Psi~) kappa - B u,
        kappa' = -(varsigma - lam/2) kappa + u,

    with ``B = B_psi_bar`` and ``L_0`` the reaction-convection matrix.
    ``model="verbatim"`` uses the block ``-K_0 E`` and the input ``R_bo``.
    """
    if model not in ("consistent", "verbatim"):
        raise ValueError(f"unknown boundary model {model!r}")
    if not np.isclose(nu, aset.nu):
        raise ValueError(f"actuators were extended with nu = {aset.nu}, problem has nu = {nu}")
    st = StateOperators(ops, nu)
    ni, Mc = ops.ni, aset.count
    k = T / n_steps
    ext = aset.psi_extensions
    ext_i = ext[:ni]
    B = aset.B_psi_bar
    varsigma_lam = aset.varsigma - lam / 2.0
    Mii = sla.cho_factor(ops.Mb.ii.toarray())

    def coupling(a, b1, b2):
        if model == "verbatim":
            return -st.K(a[:ni], b1[:ni], b2[:ni], 0.0) @ ext_i
        L = np.column_stack([apply_reaction_convection(ops, a, b1, b2, ext[:, c])[:ni]
                             for c in range(Mc)])
        return 2.0 * aset.varsigma * B - sla.cho_solve(Mii, L)

    def X_of(j):
        a, b1, b2 = coeff.at(ops, j * k)
        X = np.zeros((ni + Mc, ni + Mc))
        X[:ni, :ni] = st.X_internal(a[:ni], b1[:ni], b2[:ni], lam)
        X[:ni, ni:] = coupling(a, b1, b2)
        X[ni:, ni:] = -varsigma_lam * np.eye(Mc)
        return X

    if model == "verbatim":
        R, shift = aset.R_bo, aset.B_psi_bar
    else:
        R, shift = np.vstack([-B, np.eye(Mc)]), ext_i
    C = sla.block_diag(st.C_internal(observation), np.eye(Mc))
    H0 = sla.block_diag(st.H0_internal(), np.eye(Mc))
    X = X_of(0) if coeff.stationary else X_of
    return RiccatiProblem(X=X, R=R, C=C, k=k, n_steps=n_steps, H0=H0, shift=shift)


def solve_path(problem, homotopy_steps=8):
    """Final-time ARE by homotopy, then the backward sweep (if time-dependent)."""
    XT = problem.X_at(problem.n_steps)
    Pi_T = homotopy_init(XT, problem.R, problem.Q, problem.H0, steps=homotopy_steps)
    check_spd(Pi_T, problem.n_steps)
    if problem.stationary:
        path = RiccatiPath.constant(Pi_T, problem.k, problem.n_steps)
    else:
        path = solve_dre_backward(problem, Pi_T)
    path.R, path.shift = problem.R, problem.shift
    return path
