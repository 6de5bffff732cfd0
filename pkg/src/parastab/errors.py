"""Typed failures raised across the package.

Every simulation failure derives from :class:`SimulationError` so the CLI can
map it to exit code 2, and every configuration problem derives from
:class:`ConfigError` (exit code 1).
"""


class ParastabError(Exception):
    """Base class for all package errors."""


class ConfigError(ParastabError):
    """Invalid or incomplete experiment configuration."""


class ExprSyntaxError(ConfigError):
    def __init__(self, position, expected, text=""):
        self.position = position
        self.expected = expected
        super().__init__(f"at position {position}: expected {expected}"
                         + (f" in {text!r}" if text else ""))


class NonDifferentiable(ParastabError):
    """Differentiation path passes through ``abs``."""


class MeshError(ParastabError):
    pass


class MalformedMesh(MeshError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class DanglingIndex(MeshError):
    def __init__(self, line, index):
        self.line = line
        self.index = index
        super().__init__(f"line {line}: point index {index} out of range")


class NonPositiveArea(MeshError):
    def __init__(self, triangle):
        self.triangle = triangle
        super().__init__(f"triangle {triangle} has zero area")


class SimulationError(ParastabError):
    """Any typed numerical failure (CLI exit code 2)."""


class SingularSystem(SimulationError):
    pass


class SolverNonConvergence(SimulationError):
    def __init__(self, what, iterations):
        self.iterations = iterations
        super().__init__(f"{what} did not converge in {iterations} iterations")


class EmptyCell(SimulationError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"actuator cell {index} contains no interior node")


class RankDeficient(SimulationError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"vector {index} is dependent on its predecessors")


class SingularLyapunov(SimulationError):
    pass


class NoStabilizingSeed(SimulationError):
    pass


class MaxIterations(SimulationError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"Newton-Kleinman stopped after {iterations} "
                         f"iterations (residual {residual:.3e})")


class HomotopyFailure(SimulationError):
    def __init__(self, tau, cause):
        self.tau = tau
        self.cause = cause
        super().__init__(f"homotopy failed at tau={tau:g}: {cause}")


class RiccatiStepFailure(SimulationError):
    def __init__(self, step, cause):
        self.step = step
        self.cause = cause
        super().__init__(f"Riccati sweep failed at step {step}: {cause}")


class LossOfPositivity(SimulationError):
    def __init__(self, step):
        self.step = step
        super().__init__(f"Riccati iterate at step {step} is not positive definite")


class CompatibilityViolation(SimulationError):
    def __init__(self, mismatch):
        self.mismatch = mismatch
        super().__init__("initial boundary trace is not in the actuator span "
                         f"(mismatch {mismatch:.3e})")


class BlowUp(SimulationError):
    def __init__(self, step, norm=float("inf")):
        self.step = step
        self.norm = norm
        super().__init__(f"solution blew up at step {step}")


class NewtonDivergence(SimulationError):
    def __init__(self, step, iterations=None):
        self.step = step
        self.iterations = iterations
        super().__init__(f"Newton iteration failed at step {step}")


class NonPositiveLogValue(ParastabError):
    def __init__(self, label):
        self.label = label
        super().__init__(f"series {label!r} has a non-positive value on a log axis")
