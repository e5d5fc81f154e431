"""Exception hierarchy.

``ValidationError`` subclasses signal bad inputs (CLI exit code 2);
``ConvergenceError`` subclasses signal numerical non-convergence (exit 3).
"""


class FracSteerError(Exception):
    """Base class for all package errors."""


class ValidationError(FracSteerError, ValueError):
    """Invalid argument, dimension mismatch or malformed configuration."""


class InvalidScenarioError(ValidationError):
    """A scenario violates one of its admissibility conditions."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class AccuracyError(FracSteerError, ArithmeticError):
    """A special-function evaluation could not reach the requested accuracy."""

    def __init__(self, message, achieved_bound=float("nan")):
        super().__init__(message)
        self.achieved_bound = achieved_bound


class UncontrollableError(FracSteerError):
    """The discretized steering map has no numerically nonzero singular value."""


class TargetUnreachableError(FracSteerError):
    """The requested target has components outside the controllable subspace."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class ConvergenceError(FracSteerError, RuntimeError):
    """Base class for iterative procedures that failed to converge."""


class NeutralStiffnessError(ConvergenceError):
    """The implicit per-step iteration for the neutral term diverged."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class PicardConvergenceError(ConvergenceError):
    """The steering fixed-point iteration did not converge."""

    def __init__(self, message, ratios=(), deltas=()):
        super().__init__(message)
        self.ratios = list(ratios)
        self.deltas = list(deltas)


class ProjectionError(ConvergenceError):
    """Projection onto the admissible control set stagnated."""

    def __init__(self, message, defect=float("nan")):
        super().__init__(message)
        self.defect = defect
