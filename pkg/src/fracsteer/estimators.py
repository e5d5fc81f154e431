"""Scikit-learn style wrappers around the steering and optimal-control solvers.

``fit`` takes a :class:`~fracsteer.evolution.SteeringProblem` in place of a
data matrix; ``predict`` evaluates the fitted control at given times.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .evolution import mild_solve
from .optimal_control import CostWeights, solve_min_energy
from .steering import (
    assemble_steering_matrix,
    certificate_constants,
    contraction_certificate,
    picard_iterate,
)
from .validation import check_positive, check_problem, check_times

__all__ = ["ExactSteeringController", "MinimumEnergyController"]


class _ControllerMixin:
    def predict(self, t):
        """Control values at times ``t``, shape ``(len(t), N)``."""
        check_is_fitted(self, "control_")
        return self.control_(check_times(t, self.control_.grid.T))

    def simulate(self):
        """Trajectory of the fitted problem under the fitted control."""
        check_is_fitted(self, "control_")
        return mild_solve(self.problem_, self.control_)


class ExactSteeringController(_ControllerMixin, BaseEstimator):
    """Exact steering by the joint state-control fixed point.

    Parameters
    ----------
    tol : float
        Sup-norm stopping tolerance of the fixed-point iteration.
    max_iter : int
    ridge : float
        Tikhonov parameter of the minimum-norm inverse.
    init : {"free", "zero"}

    Attributes
    ----------
    control_, trajectory_ : fitted control and fixed-point trajectory
    n_iter_ : int
    ratios_ : list of observed contraction ratios
    q_ : float
        Contraction certificate of the problem; ``nan`` in the classical
        limit ``nu = 1``, where it is not defined.
    endpoint_error_ : float
    """

    def __init__(self, tol=1e-9, max_iter=200, ridge=0.0, init="free"):
        self.tol = tol
        self.max_iter = max_iter
        self.ridge = ridge
        self.init = init

    def fit(self, problem, y=None):
        prob = check_problem(problem)
        check_positive("tol", self.tol)
        check_positive("ridge", self.ridge, allow_zero=True)
        Hmat = assemble_steering_matrix(prob)
        if prob.nu < 1:
            self.q_, self.certified_ = contraction_certificate(certificate_constants(prob, Hmat))
        else:
            self.q_, self.certified_ = float("nan"), False
        res = picard_iterate(prob, self.tol, self.max_iter, self.ridge, self.init, Hmat)
        self.problem_ = prob
        self.control_ = res.control
        self.trajectory_ = res.trajectory
        self.n_iter_ = res.iterations
        self.ratios_ = res.ratios
        self.endpoint_error_ = res.endpoint_error
        return self


class MinimumEnergyController(_ControllerMixin, BaseEstimator):
    """Minimum-energy control subject to the endpoint constraint.

    Parameters
    ----------
    w_state, w_energy : float
        Tracking and energy weights of the cost.
    method : {"nullspace", "penalty"}

    Attributes
    ----------
    control_ : ControlSignal
    cost_ : float
    report_ : dict
    """

    def __init__(self, w_state=0.0, w_energy=1.0, method="nullspace"):
        self.w_state = w_state
        self.w_energy = w_energy
        self.method = method

    def fit(self, problem, y=None):
        prob = check_problem(problem)
        w = CostWeights(self.w_state, self.w_energy)
        u, J, report = solve_min_energy(prob, w, method=self.method)
        self.problem_ = prob
        self.control_ = u
        self.cost_ = J
        self.report_ = report
        return self
