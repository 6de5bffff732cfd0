"""Closed-form stabilizability constants and actuator-count bounds.

``D_rc``, ``D_hat`` and ``iota`` are domain-dependent existence constants
with no computable value; they are plain inputs defaulting to 1.
"""

from dataclasses import dataclass, asdict
import math


@dataclass(frozen=True)
class TheoryParams:
    d: int = 2
    r: float = 1.0
    n_a: float = 1.0          # reaction norm proxy |a - lambda/2|
    n_b: float = 0.0          # convection norm proxy |b|
    n_W: float = 1.0          # combined norm |(a - lambda/2, b)|_W
    D_rc: float = 1.0
    D_hat: float = 1.0
    iota: float = 1.0
    chi_norm: float = 1.0
    domain_volume: float = math.pi   # |Omega|
    cell_volume: float = 1.0 / 6.0   # |w_R|
    l_bar: float = 1.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.r <= 0:
            raise ValueError("r must be positive")


def theta(r, th1, th2, d):
    """``1 + th1^2 + d th2^2 + 1/r + r (th1 + d th2^2)``; always at least 1 for r > 0."""
    if r <= 0:
        raise ValueError("r must be positive")
    return 1.0 + th1 ** 2 + d * th2 ** 2 + 1.0 / r + r * (th1 + d * th2 ** 2)


def theta_bar(xi1, xi2, xi3, d, D_rc=1.0, D_hat=1.0):
    return (D_hat * (1.0 + xi1 ** 2 + d * xi2 ** 2)
            + 2.0 * math.sqrt(D_hat) * math.sqrt(D_rc * xi3 ** 2 + D_hat * (xi1 + d * xi2 ** 2)))


def t_star_upsilon(p):
    """Optimal window ``T*`` and the constant ``Upsilon`` it yields."""
    denom = p.D_rc * p.n_W ** 2 + p.D_hat * (p.n_a + p.d * p.n_b ** 2)
    if denom == 0.0:
        return math.inf, 2.0 * p.iota ** 2 * math.exp(p.D_hat)
    t_star = math.sqrt(p.D_hat / denom)
    upsilon = 2.0 * p.iota ** 2 * math.exp(theta_bar(p.n_a, p.n_b, p.n_W, p.d, p.D_rc, p.D_hat))
    return t_star, upsilon


def ball_volume(d):
    """Volume of the unit ball in ``R^d``."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def eigen_constant(d, cell_volume):
    """Asymptotic Weyl-type constant ``D_d`` for cells of volume ``cell_volume``."""
    bd = ball_volume(d)
    return 4.0 * d * math.pi ** 2 / ((d + 2) * cell_volume ** (2.0 / d) * bd ** (2.0 / d))


def _bound(raw):
    return {"raw": raw, "ceil": math.ceil(raw - 1e-12) if math.isfinite(raw) else math.inf}


def actuator_bounds(p):
    """Lower bounds on the number of actuators, each as ``{"raw", "ceil"}``."""
    d = p.d
    _, upsilon = t_star_upsilon(p)
    D_d = eigen_constant(d, p.cell_volume)
    bd = ball_volume(d)
    m_eig = D_d ** (-d / 2.0) * (4.0 * p.chi_norm ** 2 * upsilon) ** (d / 2.0)
    m_pc = (p.l_bar ** 2 * upsilon / math.pi ** 2) ** (d / 2.0)
    m_simple = ((p.D_rc * math.e * (d + 2) / (d * math.pi ** 2)) ** (d / 2.0)
                * p.domain_volume * bd * p.n_W ** d)
    denom = 2.0 * p.D_rc * p.n_W ** 2
    t_part = math.inf if denom == 0.0 else 1.0 / denom
    return {
        "M_eig": _bound(m_eig),
        "M_pc": _bound(m_pc),
        "M_simple": _bound(m_simple),
        "T_star_part": t_part,
        "D_d": D_d,
        "ball_volume": bd,
        "Upsilon": upsilon,
    }


def estimates_table(p):
    """Rows ``(name, value)`` for printing or CSV export."""
    t_star, upsilon = t_star_upsilon(p)
    b = actuator_bounds(p)
    rows = [("Theta(r, n_a, n_b, d)", theta(p.r, p.n_a, p.n_b, p.d)),
            ("T_star", t_star), ("Upsilon", upsilon),
            ("D_d", b["D_d"]), ("ball_volume", b["ball_volume"])]
    for key in ("M_eig", "M_pc", "M_simple"):
        rows.append((key, b[key]["raw"]))
        rows.append((key + "_ceil", b[key]["ceil"]))
    rows.append(("T_star_part", b["T_star_part"]))
    return rows
