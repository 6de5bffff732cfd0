"""Experiment catalog: build setups from a :class:`~parastab.config.Config` and run them."""

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import analysis
from .actuators import (STANDARD_OMEGA, BoundaryActuatorSet, build_boundary_actuators,
                        build_full_internal, build_internal_actuators)
from .config import PARAMETER_SET, family_coefficients, float_list
from .errors import BlowUp, ConfigError, NewtonDivergence
from .estimates import TheoryParams, estimates_table
from .fem import CoefficientField, assemble, solve_elliptic, spacetime_error
from .mesh import generate_disk_mesh, load_mesh, refine, rings_for_hmax
from .reports import Report, trajectory_rows
from .riccati import boundary_problem, internal_problem, solve_path
from .sim_linear import (ControlSchedule, replay_open_loop, simulate_boundary,
                         simulate_internal)
from .sim_nonlinear import (SCHEMES, NonlinearProblem, deviation_weighted_sup,
                            indicator_left, reference_error, simulate_nonlinear)

DEFAULT_Z0 = "sin(2*x1)*cos(x2)"
ACTUATOR_KINDS = ("internal", "boundary", "full")
OBSERVATIONS = ("h1", "l2")
BOUNDARY_MODELS = ("consistent", "verbatim")


# ---------------------------------------------------------------- setup

def build_mesh(cfg):
    if cfg.has("mesh", "file"):
        path = Path(cfg.str("mesh", "file"))
        try:
            mesh = load_mesh(path.read_text())
        except OSError as exc:
            raise ConfigError(f"[mesh] file: cannot read {path}: {exc.strerror}") from None
    elif cfg.has("mesh", "hmax"):
        mesh = generate_disk_mesh(rings_for_hmax(cfg.float("mesh", "hmax")))
    else:
        rings = cfg.int("mesh", "rings", 8)
        if rings < 1:
            raise ConfigError("[mesh] rings must be at least 1")
        mesh = generate_disk_mesh(rings)
    for _ in range(cfg.int("mesh", "refine", 0)):
        mesh = refine(mesh)
    return mesh


def _family(cfg):
    raw = cfg.str("coefficients", "family", "")
    if raw.strip().lower() == "all":
        return list(PARAMETER_SET)
    params = cfg.ints("coefficients", "family")
    if len(params) != 6:
        raise ConfigError("[coefficients] family needs six integers or 'all'")
    return [tuple(params)]


def build_coefficients(cfg):
    """List of ``(label, CoefficientField)``; several for ``family = all``."""
    if cfg.has("coefficients", "family"):
        out = []
        for p in _family(cfg):
            out.append(("family_" + "_".join(str(v) for v in p),
                        CoefficientField(*family_coefficients(*p))))
        return out
    a = cfg.expr("coefficients", "a", 0.0)
    b1 = cfg.expr("coefficients", "b1", 0.0)
    b2 = cfg.expr("coefficients", "b2", 0.0)
    return [("custom", CoefficientField(a, b1, b2))]


def _rect(values, what):
    if len(values) != 4:
        raise ConfigError(f"{what}: a rectangle needs x0,x1,y0,y1")
    x0, x1, y0, y1 = values
    if not (x0 < x1 and y0 < y1):
        raise ConfigError(f"{what}: empty rectangle")
    return ((x0, x1), (y0, y1))


def _rect_list(cfg, section, key):
    out = []
    for part in cfg.str(section, key).split("|"):
        try:
            out.append(_rect(float_list(part), f"[{section}] {key}"))
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
    return out


def actuator_kind(cfg):
    kind = cfg.str("actuators", "kind", "internal")
    if kind not in ACTUATOR_KINDS:
        raise ConfigError(f"[actuators] kind must be one of {', '.join(ACTUATOR_KINDS)}")
    return kind


def build_actuators(cfg, ops, kind=None, **over):
    """Actuator set from ``[actuators]``; keyword arguments override keys."""
    kind = kind or actuator_kind(cfg)
    nu = over.get("nu", cfg.float("physics", "nu", 0.25))
    if kind == "boundary":
        varsigma = over.get("varsigma", cfg.float("physics", "varsigma", 10.0))
        arcs = over.get("arcs")
        if arcs is None and cfg.has("actuators", "arcs"):
            arcs = [tuple(a) for a in _pairs(cfg.str("actuators", "arcs"))]
        return build_boundary_actuators(
            ops, theta0=cfg.float("actuators", "theta0", math.pi),
            theta1=cfg.float("actuators", "theta1", 1.25 * math.pi),
            M=over.get("M", cfg.int("actuators", "M", 6)), varsigma=varsigma, nu=nu,
            scaled_pi=cfg.bool("actuators", "scaled_pi", False), arcs=arcs)
    omega = over.get("omega")
    if omega is None:
        omega = (_rect(cfg.floats("actuators", "rect"), "[actuators] rect")
                 if cfg.has("actuators", "rect") else STANDARD_OMEGA)
    if kind == "full":
        return build_full_internal(ops, omega)
    rects = over.get("rects")
    if rects is None and cfg.has("actuators", "rects"):
        rects = _rect_list(cfg, "actuators", "rects")
    m, n = over.get("grid", (cfg.int("actuators", "m", 3), cfg.int("actuators", "n", 2)))
    return build_internal_actuators(ops, omega, m, n, rects=rects)


def _pairs(text):
    out = []
    for part in text.split("|"):
        vals = float_list(part)
        if len(vals) != 2:
            raise ConfigError("arcs are written as theta0,theta1 | theta0,theta1 ...")
        out.append(vals)
    return out


def build_initial(cfg, ops, aset):
    """``(z0, kappa0)`` for a linear run; boundary runs add the extension of ``kappa0``."""
    z0 = ops.eval(cfg.expr("ic", "expr", DEFAULT_Z0), 0.0)
    z0[ops.ni:] = 0.0
    if not isinstance(aset, BoundaryActuatorSet):
        return z0, None
    kappa0 = np.broadcast_to(np.asarray(cfg.floats("ic", "kappa0", [0.0])), (aset.count,))
    kappa0 = np.array(kappa0, dtype=float)
    z0 = z0 + aset.psi_extensions @ kappa0
    return z0, kappa0


def parse_schedule(text, T):
    low = text.strip().lower()
    if low in ("always", "on", ""):
        return ControlSchedule.always()
    if low in ("never", "off"):
        return ControlSchedule.never()
    intervals = []
    for part in text.split(","):
        try:
            a, b = part.split("-")
            intervals.append((float(a), float(b)))
        except ValueError:
            raise ConfigError(f"[schedule] on: cannot read interval {part.strip()!r}") from None
    # the last window is closed at T so the final step keeps its control
    if intervals and intervals[-1][1] >= T:
        intervals[-1] = (intervals[-1][0], math.inf)
    try:
        return ControlSchedule(tuple(intervals))
    except ValueError as exc:
        raise ConfigError(f"[schedule] on: {exc}") from None


@dataclass
class LinearSetup:
    ops: object
    coeff: object
    nu: float
    lam: float
    T: float
    n_steps: int
    aset: object
    z0: np.ndarray
    kappa0: np.ndarray
    schedule: object
    homotopy_steps: int = 8
    observation: str = "h1"
    boundary_model: str = "consistent"

    @property
    def boundary(self):
        return isinstance(self.aset, BoundaryActuatorSet)


def time_params(cfg):
    T = cfg.float("time", "T")
    steps = cfg.int("time", "steps")
    if T <= 0 or steps < 2:
        raise ConfigError("[time] needs T > 0 and steps >= 2")
    return T, steps


def linear_setups(cfg, kind=None, ops=None):
    """One :class:`LinearSetup` per coefficient field (``family = all`` gives six)."""
    T, steps = time_params(cfg)
    ops = ops if ops is not None else assemble(build_mesh(cfg))
    aset = build_actuators(cfg, ops, kind)
    z0, kappa0 = build_initial(cfg, ops, aset)
    schedule = parse_schedule(cfg.str("schedule", "on", "always"), T)
    out = []
    for label, coeff in build_coefficients(cfg):
        out.append((label, LinearSetup(
            ops=ops, coeff=coeff, nu=cfg.float("physics", "nu", 0.25),
            lam=cfg.float("physics", "lambda", 2.0), T=T, n_steps=steps, aset=aset, z0=z0,
            kappa0=kappa0, schedule=schedule,
            homotopy_steps=cfg.int("solver", "homotopy_steps", 8),
            observation=cfg.choice("solver", "observation", OBSERVATIONS, "h1"),
            boundary_model=cfg.choice("solver", "boundary_model", BOUNDARY_MODELS, "consistent"))))
    return out


# ---------------------------------------------------------------- runs

def riccati_path(s):
    if s.boundary:
        problem = boundary_problem(s.ops, s.coeff, s.aset, s.lam, s.nu, s.T, s.n_steps,
                                   s.observation, model=s.boundary_model)
    else:
        problem = internal_problem(s.ops, s.coeff, s.aset, s.lam, s.nu, s.T, s.n_steps,
                                   s.observation)
    return solve_path(problem, s.homotopy_steps)


@dataclass
class LinearRun:
    traj: object
    path: object
    blowup: object = None   # BlowUp instance when the run diverged

    def metrics(self, lam):
        return analysis.decay_metrics(self.traj, lam, blew_up=self.blowup is not None)


def run_linear(s, path=None, controlled=True, schedule=None, z0=None):
    """Simulate ``s`` with feedback (computing the path if needed) or without."""
    if controlled and path is None:
        path = riccati_path(s)
    use = path if controlled else None
    z0 = s.z0 if z0 is None else z0
    schedule = s.schedule if schedule is None else schedule
    try:
        if s.boundary:
            traj = simulate_boundary(s.ops, s.coeff, s.aset, use, s.lam, s.nu, z0, s.kappa0,
                                     schedule, s.T, s.n_steps)
        else:
            traj = simulate_internal(s.ops, s.coeff, s.aset, use, s.lam, s.nu, z0, schedule,
                                     s.T, s.n_steps)
        return LinearRun(traj, path)
    except BlowUp as exc:
        return LinearRun(exc.trajectory, path, exc)


def _coeff_rows(run, s):
    if s.boundary:
        return run.traj.kappa, "kappa"
    return run.traj.control, "u"


def add_linear_table(report, name, run, s, cost=True):
    traj = run.traj
    if traj is None:
        return
    coeffs, prefix = _coeff_rows(run, s)
    c = None
    if cost and run.path is not None and len(run.path.Pi) == len(traj.t):
        c = analysis.cost_series(run.path, traj, s.aset if s.boundary else None)
    count = 0 if coeffs is None else coeffs.shape[0]
    cols = ["t", "normH2", "weighted_normH2", "cost"] + [f"{prefix}_{i + 1}" for i in range(count)]
    report.add_table(name, cols, trajectory_rows(traj, c, coeffs))


def add_riccati_table(report, name, path):
    if path is None or not path.residuals:
        return
    report.add_table(name, ["step", "residual", "iterations", "substeps"], path.metadata_rows())


def _record_metrics(report, prefix, run, lam):
    m = run.metrics(lam)
    for key, value in m.items():
        report.summary[f"{prefix}.{key}"] = value
    if run.blowup is not None:
        report.summary[f"{prefix}.blowup_step"] = run.blowup.step
    return m


def _norm_series(label, run):
    t = run.traj.t
    return (label, t, run.traj.normH2)


# ---------------------------------------------------------------- experiments

def exp_stabilize(cfg, kind):
    report = Report(f"stabilize-linear-{kind}")
    for label, s in linear_setups(cfg, kind):
        closed = run_linear(s)
        open_ = run_linear(s, controlled=False)
        add_linear_table(report, f"{label}_controlled", closed, s)
        add_linear_table(report, f"{label}_uncontrolled", open_, s, cost=False)
        add_riccati_table(report, f"{label}_riccati", closed.path)
        _record_metrics(report, f"{label}.controlled", closed, s.lam)
        _record_metrics(report, f"{label}.uncontrolled", open_, s.lam)
        n0 = open_.traj.normH2[0]
        grew = open_.blowup is not None or open_.traj.normH2[-1] > n0
        report.summary[f"{label}.uncontrolled.grows"] = bool(grew)
        if closed.blowup is not None:
            report.failures.append(f"{label}: controlled run blew up at step {closed.blowup.step}")
        report.add_plot(f"{label}_norms", [_norm_series("controlled", closed),
                                           _norm_series("uncontrolled", open_)],
                        title=f"{label}: squared norm", ylabel="|z|^2")
    return report


def exp_actuator_sweep(cfg):
    report = Report("actuator-sweep")
    kind = actuator_kind(cfg)
    (label, s), = linear_setups(cfg, kind)[:1]
    rows, series, finals, costs = [], [], [], []
    if kind == "boundary":
        variants = [("M", m, {"M": m}) for m in cfg.ints("sweep", "counts", [1, 2, 4, 6])]
    else:
        grids = [g.strip() for g in cfg.str("sweep", "grids", "1x1,2x2,3x2").split(",")]
        variants = []
        for g in grids:
            try:
                m, n = (int(v) for v in g.lower().split("x"))
            except ValueError:
                raise ConfigError(f"[sweep] grids: cannot read {g!r} (use MxN)") from None
            variants.append(("grid", g, {"grid": (m, n)}))
    for name, value, over in variants:
        aset = build_actuators(cfg, s.ops, kind, **over)
        z0, kappa0 = build_initial(cfg, s.ops, aset)
        sv = replace(s, aset=aset, z0=z0, kappa0=kappa0)
        run = run_linear(sv)
        m = _record_metrics(report, f"{name}_{value}", run, s.lam)
        final = run.traj.weighted_normH2[-1] / run.traj.weighted_normH2[0]
        cost = analysis.cost_series(run.path, run.traj, aset if sv.boundary else None)
        rows.append([value, aset.count, m["weighted_sup"], final, cost[0], cost[-1]])
        finals.append(final)
        costs.append(cost)
        add_linear_table(report, f"run_{name}_{value}", run, sv)
        series.append((f"{name}={value}", run.traj.t, run.traj.weighted_normH2))
    report.add_table("sweep", [variants[0][0], "actuators", "weighted_sup", "final_weighted_ratio",
                               "cost_initial", "cost_final"], rows)
    report.add_plot("weighted_norms", series, title="weighted squared norm",
                    ylabel="exp(lambda t)|z|^2")
    if len(finals) >= 2:
        report.summary["final_last_le_first"] = bool(finals[-1] <= finals[0])
        report.summary["cost_majority_last_le_first"] = analysis.majority_le(costs[-1], costs[0])
    return report


SPREAD_RECTS = (((0.3, 0.55), (0.3, 0.3 + 1.0 / 6.0)), ((-0.55, -0.3), (0.3, 0.3 + 1.0 / 6.0)),
                ((-0.55, -0.3), (-0.3 - 1.0 / 6.0, -0.3)), ((0.3, 0.55), (-0.3 - 1.0 / 6.0, -0.3)))
SPREAD_ARCS = ((0.0, math.pi / 8), (math.pi / 2, 5 * math.pi / 8), (math.pi, 9 * math.pi / 8),
               (1.5 * math.pi, 13 * math.pi / 8))


def exp_placement(cfg):
    """Actuators clustered as configured in ``[actuators]`` vs spread over ``[sweep] spread``."""
    report = Report("placement")
    kind = actuator_kind(cfg)
    (label, s), = linear_setups(cfg, kind)[:1]
    if kind == "boundary":
        spread = ([tuple(p) for p in _pairs(cfg.str("sweep", "spread"))]
                  if cfg.has("sweep", "spread") else list(SPREAD_ARCS))
        variants = [("clustered", {}), ("spread", {"arcs": spread})]
    else:
        spread = (_rect_list(cfg, "sweep", "spread") if cfg.has("sweep", "spread")
                  else list(SPREAD_RECTS))
        variants = [("clustered", {}), ("spread", {"rects": spread})]
    rows, series = [], []
    for name, over in variants:
        aset = build_actuators(cfg, s.ops, kind, **over)
        z0, kappa0 = build_initial(cfg, s.ops, aset)
        sv = replace(s, aset=aset, z0=z0, kappa0=kappa0)
        run = run_linear(sv)
        m = _record_metrics(report, name, run, s.lam)
        rows.append([name, aset.count, m["weighted_sup"], m["final_ratio"]])
        add_linear_table(report, f"run_{name}", run, sv)
        series.append((name, run.traj.t, run.traj.normH2))
    report.add_table("placement", ["placement", "actuators", "weighted_sup", "final_ratio"], rows)
    report.add_plot("norms", series, title="squared norm by placement", ylabel="|z|^2")
    return report


def exp_lambda_sweep(cfg):
    report = Report("lambda-sweep")
    (label, s), = linear_setups(cfg)[:1]
    lams = cfg.floats("sweep", "lambdas", [float(v) for v in range(11)])
    rows, series = [], []
    for lam in lams:
        sv = replace(s, lam=lam)
        run = run_linear(sv)
        if run.blowup is not None:
            rows.append([lam, math.inf, math.inf, math.inf])
            report.failures.append(f"lambda={lam:g}: blew up at step {run.blowup.step}")
            continue
        m = run.metrics(lam)
        ml = analysis.m_lambda(run.traj.normH2, lam, run.traj.k)
        rows.append([lam, ml, m["weighted_sup"], m["final_ratio"]])
        series.append((f"lambda={lam:g}", run.traj.t, run.traj.normH2))
    report.add_table("m_lambda", ["lambda", "m_lambda", "weighted_sup", "final_ratio"], rows)
    report.add_plot("norms", series, title="squared norm per lambda", ylabel="|z|^2")
    finite = [r[1] for r in rows if math.isfinite(r[1])]
    report.summary["m_lambda_nondecreasing"] = bool(
        all(b >= a - 1e-6 for a, b in zip(finite, finite[1:])))
    return report


def exp_varsigma_sweep(cfg):
    report = Report("varsigma-sweep")
    (label, s), = linear_setups(cfg, "boundary")[:1]
    rows, series = [], []
    for vs in cfg.floats("sweep", "varsigmas", [1.0, 10.0, 100.0]):
        aset = build_actuators(cfg, s.ops, "boundary", varsigma=vs)
        z0, kappa0 = build_initial(cfg, s.ops, aset)
        sv = replace(s, aset=aset, z0=z0, kappa0=kappa0)
        run = run_linear(sv)
        m = _record_metrics(report, f"varsigma_{vs:g}", run, s.lam)
        kmax = float(np.max(np.abs(run.traj.kappa))) if run.traj.kappa.size else 0.0
        rows.append([vs, m["weighted_sup"], m["final_ratio"], kmax])
        series.append((f"varsigma={vs:g}", run.traj.t, run.traj.normH2))
    report.add_table("varsigma", ["varsigma", "weighted_sup", "final_ratio", "max_abs_kappa"], rows)
    report.add_plot("norms", series, title="squared norm per varsigma", ylabel="|z|^2")
    return report


def replay_study(s, perturbation=1e-3, path=None):
    """Closed loop, verbatim open-loop replay and replay onto a perturbed state."""
    closed = run_linear(s, path=path)
    if closed.blowup is not None:
        raise closed.blowup
    kappa = closed.traj.kappa

    def replay(z0):
        try:
            return LinearRun(replay_open_loop(s.ops, s.coeff, s.aset, kappa, s.lam, s.nu, z0,
                                              T=s.T, n_steps=s.n_steps), None)
        except BlowUp as exc:
            return LinearRun(exc.trajectory, None, exc)

    same = replay(s.z0)
    z0p = s.z0.copy()
    z0p[:s.ops.ni] *= 1.0 + perturbation
    perturbed = replay(z0p)
    return closed, same, perturbed


def exp_feedback_replay(cfg):
    report = Report("feedback-replay")
    (label, s), = linear_setups(cfg, "boundary")[:1]
    delta = cfg.float("sweep", "perturbation", 1e-3)
    closed, same, perturbed = replay_study(s, delta)
    diff = float(np.max(np.abs(same.traj.z - closed.traj.z)))
    report.summary["replay.max_abs_difference"] = diff
    report.summary["replay.bit_exact"] = bool(np.array_equal(same.traj.z, closed.traj.z))
    _record_metrics(report, "closed_loop", closed, s.lam)
    _record_metrics(report, "open_loop_perturbed", perturbed, s.lam)
    add_linear_table(report, "closed_loop", closed, s)
    add_linear_table(report, "open_loop_perturbed", perturbed, s, cost=False)
    report.add_plot("norms", [_norm_series("closed loop", closed),
                              _norm_series("open loop, perturbed", perturbed)],
                    title="closed loop vs open-loop replay", ylabel="|z|^2")
    return report


def switching_checks(t, norms, schedule, T, tail=0.5):
    """Decay on the tail of every on-window, growth across every off-window."""
    out = {}
    windows = [(a, min(b, T)) for a, b in schedule.on_intervals]
    for i, (a, b) in enumerate(windows):
        start = a + (1.0 - tail) * (b - a)
        idx = np.flatnonzero((t >= start - 1e-12) & (t <= b + 1e-12))
        seg = norms[idx]
        out[f"on{i + 1}.tail_decreasing"] = bool(len(seg) > 1 and np.all(np.diff(seg) <= 0))
    for i in range(len(windows) - 1):
        a, b = windows[i][1], windows[i + 1][0]
        ja, jb = int(np.argmin(np.abs(t - a))), int(np.argmin(np.abs(t - b)))
        out[f"off{i + 1}.increases"] = bool(norms[jb] > norms[ja])
    return out


def exp_switching(cfg):
    report = Report("switching")
    (label, s), = linear_setups(cfg)[:1]
    path = riccati_path(s)
    switched = run_linear(s, path=path)
    always = run_linear(s, path=path, schedule=ControlSchedule.always())
    for name, run in (("switched", switched), ("always_on", always)):
        _record_metrics(report, name, run, s.lam)
        add_linear_table(report, name, run, s)
    if switched.blowup is None:
        report.summary.update({f"switched.{k}": v for k, v in
                               switching_checks(switched.traj.t, switched.traj.normH2,
                                                s.schedule, s.T).items()})
    if always.blowup is None:
        report.summary["always_on.decreasing"] = bool(np.all(np.diff(always.traj.normH2) <= 0))
    report.add_plot("norms", [_norm_series("switched", switched),
                              _norm_series("always on", always)],
                    title="switching the feedback off and on", ylabel="|z|^2")
    return report


# ---------------------------------------------------------------- nonlinear

def nonlinear_problem(cfg):
    return NonlinearProblem(nu=cfg.float("physics", "nu", 0.2), c1=cfg.float("physics", "c1", -2.0),
                            c2=cfg.float("physics", "c2", -1.0), c3=cfg.float("physics", "c3", -3.0),
                            yhat=cfg.expr("coefficients", "yhat", "(2*x1^3 + x2^2)*sin(t)"))


def perturbation_shape(cfg, ops, aset=None):
    """``(v0, kappa_direction)``; boundary runs need a compatible ``v0``."""
    kind = cfg.str("ic", "v0", "indicator")
    if kind == "indicator":
        v0 = indicator_left(ops, cfg.float("ic", "cut", -1.0 / 3.0))
        v0[ops.ni:] = 0.0
        return v0, None
    if kind == "elliptic":
        rho = None
        bvals = None
        if isinstance(aset, BoundaryActuatorSet):
            rho = np.broadcast_to(np.asarray(cfg.floats("ic", "rho", [1, 1, 0, 0.5, 0, 0]), float),
                                  (aset.count,)).copy()
            bvals = aset.psi_traces @ rho
        v0 = solve_elliptic(ops, cfg.float("ic", "mu", 0.5),
                            cfg.expr("ic", "beta_r", "sin(x1) + x2"),
                            cfg.expr("ic", "beta_c1", "2*x1*x2"),
                            cfg.expr("ic", "beta_c2", "-2*sin(x2)"),
                            cfg.expr("ic", "h", "cos(3*x2)^2 + sin(x1) + 2"), bvals)
        return v0, rho
    v0 = ops.eval(cfg.expr("ic", "v0"), 0.0)
    v0[ops.ni:] = 0.0
    return v0, None


@dataclass
class NonlinearRun:
    traj: object
    failure: object = None

    @property
    def stable(self):
        return self.failure is None


def run_nonlinear(ops, problem, y0, T, N, scheme, feedback=None, kappa0=None, lam=0.0,
                  **kwargs):
    try:
        return NonlinearRun(simulate_nonlinear(ops, problem, y0, T, N, scheme, feedback,
                                               kappa0, lam, **kwargs))
    except (BlowUp, NewtonDivergence) as exc:
        return NonlinearRun(getattr(exc, "trajectory", None), exc)


def _solver_kwargs(cfg):
    return {"newton_tol": cfg.float("solver", "newton_tol", 1e-12),
            "newton_maxit": cfg.int("solver", "newton_maxit", 50),
            "jacobian": cfg.str("solver", "jacobian", "exact")}


def _scheme(cfg):
    scheme = cfg.str("solver", "scheme", "extrapolation")
    if scheme not in SCHEMES:
        raise ConfigError(f"[solver] scheme must be one of {', '.join(SCHEMES)}")
    return scheme


class NonlinearStudy:
    """Shared operators, actuators and Riccati path for an epsilon sweep."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.T, self.N = time_params(cfg)
        self.ops = assemble(build_mesh(cfg))
        self.problem = nonlinear_problem(cfg)
        self.lam = cfg.float("physics", "lambda", 1.0)
        self.scheme = _scheme(cfg)
        self.kw = _solver_kwargs(cfg)
        kind = actuator_kind(cfg)
        self.aset = build_actuators(cfg, self.ops, kind, nu=self.problem.nu)
        self.v0, self.rho = perturbation_shape(cfg, self.ops, self.aset)
        s = LinearSetup(self.ops, self.problem.linearized(), self.problem.nu, self.lam, self.T,
                        self.N, self.aset, None, None, ControlSchedule.always(),
                        cfg.int("solver", "homotopy_steps", 8),
                        cfg.choice("solver", "observation", OBSERVATIONS, "h1"),
                        cfg.choice("solver", "boundary_model", BOUNDARY_MODELS, "consistent"))
        self.path = riccati_path(s)

    def run(self, eps, controlled=True):
        y0 = self.problem.initial_state(self.ops, self.v0, eps)
        kappa0 = None
        if controlled and isinstance(self.aset, BoundaryActuatorSet):
            rho = self.rho if self.rho is not None else np.zeros(self.aset.count)
            kappa0 = eps * rho
        fb = (self.aset, self.path) if controlled else None
        return run_nonlinear(self.ops, self.problem, y0, self.T, self.N, self.scheme, fb,
                             kappa0, self.lam, **self.kw)

    def stable(self, eps, ceiling=analysis.STABILIZED_CEILING):
        r = self.run(eps)
        if not r.stable:
            return False
        return deviation_weighted_sup(r.traj, self.lam) <= ceiling


def bisect_threshold(stable, inside, outside, tol=1e-3, maxit=60):
    """Boundary between a stable ``inside`` value and an unstable ``outside`` one."""
    if not stable(inside):
        raise ValueError("the inner bracket end is not stable")
    if stable(outside):
        return outside
    for _ in range(maxit):
        if abs(outside - inside) <= tol:
            break
        mid = 0.5 * (inside + outside)
        if stable(mid):
            inside = mid
        else:
            outside = mid
    return inside


def exp_nonlinear(cfg):
    report = Report("nonlinear")
    st = NonlinearStudy(cfg)
    eps_list = cfg.floats("sweep", "epsilons", [cfg.float("ic", "epsilon", 0.1)])
    rows, series = [], []
    for eps in eps_list:
        for controlled in (True, False):
            r = st.run(eps, controlled)
            tag = f"eps_{eps:g}_{'controlled' if controlled else 'uncontrolled'}"
            if r.stable:
                sup = deviation_weighted_sup(r.traj, st.lam) if eps != 0 else 0.0
                status, step = "completed", len(r.traj.t) - 1
            else:
                sup, status, step = math.inf, type(r.failure).__name__, r.failure.step
            rows.append([eps, controlled, status, step, sup])
            report.summary[f"{tag}.status"] = status
            report.summary[f"{tag}.deviation_weighted_sup"] = sup
            if r.traj is not None and len(r.traj.t) > 1:
                dev = r.traj.extra["dev_norms"][:len(r.traj.t)]
                series.append((tag, r.traj.t, np.maximum(dev, 1e-300)))
                traj = r.traj
                report.add_table(tag, ["t", "normH2", "deviation_normH2", "newton_iters"],
                                 [[traj.t[j], traj.norms_sim[j], dev[j], traj.newton_iters[j]]
                                  for j in range(len(traj.t))])
    report.add_table("epsilons", ["epsilon", "controlled", "status", "last_step",
                                  "deviation_weighted_sup"], rows)
    if series:
        report.add_plot("deviation", series, title="squared deviation from the reference",
                        ylabel="|y - yhat|^2")
    if cfg.bool("sweep", "bisect", False):
        tol = cfg.float("sweep", "bisect_tol", 1e-3)
        hi = cfg.float("sweep", "bisect_hi", 1.0)
        lo = cfg.float("sweep", "bisect_lo", -1.0)
        report.summary["threshold_positive"] = bisect_threshold(st.stable, 0.0, hi, tol)
        report.summary["threshold_negative"] = bisect_threshold(st.stable, 0.0, lo, tol)
    return report


def refinement_errors(mesh, problem, T, n_steps, levels, scheme, **kw):
    """Space-time errors against the reference, refining mesh and step together."""
    errors = []
    for _ in range(levels):
        ops = assemble(mesh)
        traj = simulate_nonlinear(ops, problem, ops.eval(problem.yhat, 0.0), T, n_steps,
                                  scheme, **kw)
        errors.append(reference_error(ops, traj))
        mesh = refine(mesh)
        n_steps *= 2
    return errors


def exp_refinement(cfg):
    report = Report("refinement")
    T, N = time_params(cfg)
    problem = nonlinear_problem(cfg)
    levels = cfg.int("sweep", "levels", 4)
    if levels < 2:
        raise ConfigError("[sweep] levels must be at least 2")
    schemes = [x.strip() for x in cfg.str("sweep", "schemes", "extrapolation").split(",")]
    mesh = build_mesh(cfg)
    kw = _solver_kwargs(cfg)
    rows = []
    series = []
    for scheme in schemes:
        if scheme not in SCHEMES:
            raise ConfigError(f"[sweep] schemes: unknown scheme {scheme!r}")
        errs = refinement_errors(mesh, problem, T, N, levels, scheme,
                                 **(kw if scheme == "newton" else {}))
        ratios = analysis.convergence_ratios(errs)
        for lvl, e in enumerate(errs):
            rows.append([scheme, lvl + 1, e, ratios[lvl - 1] if lvl else math.nan])
        report.summary[f"{scheme}.last_ratio"] = ratios[-1]
        series.append((scheme, np.arange(1, levels + 1, dtype=float), np.asarray(errs)))
    report.add_table("refinement", ["scheme", "level", "error", "ratio"], rows)
    report.add_plot("errors", series, title="space-time error per level", ylabel="error")
    return report


def comparison_runs(ops, problem, T, nodes, schemes=SCHEMES, **kw):
    """``{(nodes, scheme): NonlinearRun}`` with ``nodes - 1`` steps each."""
    out = {}
    for n in nodes:
        for scheme in schemes:
            y0 = ops.eval(problem.yhat, 0.0)
            out[(n, scheme)] = run_nonlinear(ops, problem, y0, T, n - 1, scheme,
                                             **(kw if scheme == "newton" else {}))
    return out


def exp_scheme_comparison(cfg):
    report = Report("scheme-comparison")
    T, _ = time_params(cfg)
    ops = assemble(build_mesh(cfg))
    problem = nonlinear_problem(cfg)
    nodes = cfg.ints("sweep", "nodes", [60, 240, 600])
    runs = comparison_runs(ops, problem, T, nodes, SCHEMES, **_solver_kwargs(cfg))
    rows = []
    for (n, scheme), r in sorted(runs.items()):
        if r.stable:
            err = reference_error(ops, r.traj)
            iters = float(np.mean(r.traj.newton_iters[1:])) if scheme == "newton" else math.nan
            rows.append([n, scheme, "completed", err, iters])
        else:
            rows.append([n, scheme, type(r.failure).__name__, math.nan, math.nan])
        report.summary[f"{n}.{scheme}.status"] = rows[-1][2]
    report.add_table("schemes", ["nodes", "scheme", "status", "error", "newton_mean_iters"], rows)
    disc = []
    for n in nodes:
        done = [s for s in SCHEMES if runs[(n, s)].stable]
        for i, a in enumerate(done):
            for b in done[i + 1:]:
                d = spacetime_error(ops, runs[(n, a)].traj.z, runs[(n, b)].traj.z, T / (n - 1))
                disc.append([n, a, b, d])
        series = [(s, runs[(n, s)].traj.t, runs[(n, s)].traj.norms_sim)
                  for s in SCHEMES if runs[(n, s)].traj is not None]
        if series:
            report.add_plot(f"norms_{n}", series, title=f"{n} time nodes", ylabel="|y|^2")
    report.add_table("discrepancies", ["nodes", "scheme_a", "scheme_b", "spacetime_difference"], disc)
    return report


def exp_estimates(cfg):
    report = Report("estimates")
    fields = TheoryParams.__dataclass_fields__
    kwargs = {}
    if cfg is not None and cfg.has("physics"):
        for name in fields:
            if cfg.has("physics", name):
                kwargs[name] = cfg.int("physics", name) if name == "d" else cfg.float("physics", name)
    try:
        params = TheoryParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[physics] {exc}") from None
    rows = estimates_table(params)
    report.add_table("estimates", ["quantity", "value"], rows)
    report.summary.update({k: v for k, v in rows})
    return report


EXPERIMENTS = {
    "stabilize-linear-internal": lambda cfg: exp_stabilize(cfg, "internal"),
    "stabilize-linear-boundary": lambda cfg: exp_stabilize(cfg, "boundary"),
    "actuator-sweep": exp_actuator_sweep,
    "placement": exp_placement,
    "lambda-sweep": exp_lambda_sweep,
    "varsigma-sweep": exp_varsigma_sweep,
    "feedback-replay": exp_feedback_replay,
    "switching": exp_switching,
    "nonlinear": exp_nonlinear,
    "refinement": exp_refinement,
    "scheme-comparison": exp_scheme_comparison,
    "estimates": exp_estimates,
}


def run_experiment(kind, cfg):
    try:
        fn = EXPERIMENTS[kind]
    except KeyError:
        raise ConfigError(f"unknown experiment {kind!r}") from None
    return fn(cfg)
