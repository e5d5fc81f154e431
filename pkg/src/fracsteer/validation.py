"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import math

import numpy as np

from .evolution import ControlSignal, SteeringProblem
from .exceptions import ValidationError

__all__ = [
    "check_control",
    "check_interval",
    "check_positive",
    "check_problem",
    "check_times",
]


def check_positive(name, value, allow_zero=False):
    """Return ``value`` as a float after checking it is finite and positive."""
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a number, got {value!r}") from None
    ok = v >= 0 if allow_zero else v > 0
    if not (math.isfinite(v) and ok):
        bound = "nonnegative" if allow_zero else "positive"
        raise ValidationError(f"{name} must be finite and {bound}, got {value!r}")
    return v


def check_interval(name, value, lo, hi, closed_hi=False):
    """Check ``lo < value < hi`` (or ``<= hi`` when ``closed_hi``)."""
    v = float(value)
    if not (lo < v < hi or (closed_hi and v == hi)):
        right = "]" if closed_hi else ")"
        raise ValidationError(f"{name} must lie in ({lo}, {hi}{right}, got {value!r}")
    return v


def check_problem(problem):
    if not isinstance(problem, SteeringProblem):
        raise ValidationError(f"expected a SteeringProblem, got {type(problem).__name__}")
    return problem


def check_control(u, problem):
    if not isinstance(u, ControlSignal):
        raise ValidationError(f"expected a ControlSignal, got {type(u).__name__}")
    if u.grid != problem.grid or u.N != problem.N:
        raise ValidationError(
            f"control is {u.grid.M}x{u.N} on T={u.grid.T}, problem needs "
            f"{problem.grid.M}x{problem.N} on T={problem.grid.T}"
        )
    return u


def check_times(t, T):
    """1-D float array of evaluation times inside ``[0, T]``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.ndim != 1:
        raise ValidationError("evaluation times must be a scalar or a 1-D array")
    if not np.all(np.isfinite(t)) or np.any(t < 0) or np.any(t > T * (1 + 1e-12)):
        raise ValidationError(f"evaluation times must lie in [0, {T}]")
    return t
