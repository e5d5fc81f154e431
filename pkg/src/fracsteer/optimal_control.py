"""Minimum-energy steering.

Minimize ``J(u) = (w_state/2) int |x_u - x_d|^2 dt + (w_energy/2) int |u|^2 dt``
over controls with ``x_u(T) = x_d``. With a linear neutral term the map
``u -> x_u`` is affine, so the admissible set is an affine subspace and the
problem is an equality-constrained quadratic program. Two solvers are
provided: a direct null-space solve and a quadratic-penalty continuation
that only needs objective gradients.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .evolution import ControlSignal, mild_solve, pulse_responses
from .exceptions import ProjectionError, ValidationError
from .steering import FEASIBILITY_TOL, SteeringMatrix, min_norm_inverse

__all__ = [
    "AffineModel",
    "CostWeights",
    "affine_model",
    "cost",
    "project_feasible",
    "solve_min_energy",
]

log = logging.getLogger(__name__)

PENALTY_LADDER = (1e2, 1e4, 1e6)


@dataclass(frozen=True)
class CostWeights:
    """Weights of the tracking term and the control energy."""

    w_state: float = 0.0
    w_energy: float = 1.0

    def __post_init__(self):
        if not (self.w_state >= 0 and math.isfinite(self.w_state)):
            raise ValidationError(f"w_state must be finite and nonnegative, got {self.w_state}")
        if not (self.w_energy > 0 and math.isfinite(self.w_energy)):
            raise ValidationError(f"w_energy must be finite and positive, got {self.w_energy}")


def _node_weights(grid):
    c = np.full(grid.M + 1, grid.dt)
    c[[0, -1]] *= 0.5
    return c


def cost(traj, u, w, xd):
    """Objective value.

    The tracking integral uses the trapezoid rule on the nodes; the energy
    integral is exact for the piecewise-constant control.
    """
    if traj.grid != u.grid:
        raise ValidationError("trajectory and control live on different grids")
    xd = getattr(xd, "coeffs", xd)
    track = 0.0
    if w.w_state:
        dev = np.sum((traj.states - np.asarray(xd)[None, :]) ** 2, axis=1)
        track = 0.5 * w.w_state * float(_node_weights(traj.grid) @ dev)
    energy = 0.5 * w.w_energy * u.grid.dt * float(np.sum(u.values**2))
    return track + energy


class AffineModel:
    """``x_u = x_free + L u`` on the grid, built from pulse responses.

    Column ``i * N + n`` of ``L`` is the response to a unit pulse of channel
    ``n`` on ``[t_i, t_{i+1})``; by shift invariance it equals the first
    pulse response delayed by ``i`` steps.
    """

    def __init__(self, prob):
        self.prob = prob
        self.grid = prob.grid
        self.x_free = np.array(mild_solve(prob).states)
        self.pulses = pulse_responses(prob)  # (M + 1, P, N)
        M = self.grid.M
        # E[:, i*N + n] = pulses[M - i, :, n]
        self.E = self.pulses[M:0:-1].transpose(1, 0, 2).reshape(prob.P, M * prob.N)

    @cached_property
    def endpoint(self):
        return SteeringMatrix(self.E, self.grid, self.prob.N)

    @cached_property
    def L(self):
        """Dense response matrix, shape ``((M + 1) * P, M * N)``."""
        M, P, N = self.grid.M, self.prob.P, self.prob.N
        lag = np.arange(M + 1)[:, None] - np.arange(M)[None, :]
        blocks = np.where((lag > 0)[:, :, None, None], self.pulses[np.clip(lag, 0, M)], 0.0)
        return blocks.transpose(0, 2, 1, 3).reshape((M + 1) * P, M * N)

    def states(self, v):
        return self.x_free + (self.L @ v).reshape(self.grid.M + 1, self.prob.P)

    def final(self, v):
        return self.x_free[-1] + self.E @ v


def affine_model(prob):
    return AffineModel(prob)


class _Quadratic:
    """``J(v) = v'Qv/2 + g'v + c0`` in stacked control coordinates."""

    def __init__(self, model, w):
        prob = model.prob
        self.model, self.w = model, w
        self.dt = prob.grid.dt
        self.b = prob.xd.coeffs - model.x_free[-1]
        if w.w_state:
            W = np.repeat(_node_weights(prob.grid), prob.P)
            L = model.L
            r0 = (model.x_free - prob.xd.coeffs[None, :]).ravel()
            self.LtW = L.T * W[None, :]
            self.Q = w.w_state * (self.LtW @ L)
            self.Q[np.diag_indices_from(self.Q)] += w.w_energy * self.dt
            self.g = w.w_state * (self.LtW @ r0)
            self.c0 = 0.5 * w.w_state * float(W @ r0**2)
        else:
            self.Q = None
            self.g = 0.0
            self.c0 = 0.0

    def hess_apply(self, v):
        if self.Q is None:
            return self.w.w_energy * self.dt * v
        return self.Q @ v

    def value(self, v):
        lin = float(self.g @ v) if self.Q is not None else 0.0
        return 0.5 * float(v @ self.hess_apply(v)) + lin + self.c0

    def grad(self, v):
        return self.hess_apply(v) + self.g


def _null_project(Esm, x):
    """Component of ``x`` in the kernel of the endpoint map."""
    _, _, Vt = Esm._svd
    Vr = Vt[: Esm.rank]
    return x - Vr.T @ (Vr @ x)


def project_feasible(prob, u, model=None, feasibility_tol=None, max_iter=20):
    """Correct ``u`` until ``x_u(T) = x_d`` within ``feasibility_tol``.

    Each step adds the minimum-norm correction of the current endpoint
    defect, with the defect measured by the full mild solve.

    Raises
    ------
    ProjectionError
        If the defect stops decreasing before reaching the tolerance.
    """
    if model is None:
        model = AffineModel(prob)
    if feasibility_tol is None:
        feasibility_tol = FEASIBILITY_TOL * max(prob.xd.norm(), 1e-6)
    prev = math.inf
    for _ in range(max_iter):
        defect = prob.xd.coeffs - mild_solve(prob, u).states[-1]
        dn = float(np.linalg.norm(defect))
        if dn <= feasibility_tol:
            return u
        if dn > 0.5 * prev:
            break
        prev = dn
        du, _ = min_norm_inverse(model.endpoint, defect, feasibility_tol=math.inf)
        u = u + du
    raise ProjectionError(
        f"endpoint defect stagnated at {dn:.3g} (tolerance {feasibility_tol:.3g})", defect=dn
    )


def _fd_gradient(prob, w, v, rho, h=1e-6):
    def f(vec):
        u = ControlSignal.from_vector(vec, prob.grid, prob.N)
        traj = mild_solve(prob, u)
        pen = 0.5 * rho * float(np.sum((traj.states[-1] - prob.xd.coeffs) ** 2))
        return cost(traj, u, w, prob.xd) + pen

    g = np.empty_like(v)
    for k in range(v.size):
        e = np.zeros_like(v)
        e[k] = h
        g[k] = (f(v + e) - f(v - e)) / (2 * h)
    return g


def _penalty_stage(quad, E, b, rho, v, gtol, max_iter, fd=None, memory=10):
    """Gradient descent with a Barzilai-Borwein trial step and Armijo backtracking.

    The sufficient-decrease test is taken against the largest of the last
    ``memory`` objective values, which lets the BB step through on
    ill-conditioned stages.
    """

    def f(x):
        r = E @ x - b
        return quad.value(x) + 0.5 * rho * float(r @ r)

    def grad(x):
        if fd is not None:
            return fd(x, rho)
        return quad.grad(x) + rho * (E.T @ (E @ x - b))

    lip = quad.w.w_energy * quad.dt + rho * float(np.linalg.norm(E, 2)) ** 2
    if quad.Q is not None:
        lip += float(np.linalg.norm(quad.Q, 2))
    step = 1.0 / lip
    fv, g = f(v), grad(v)
    history = [fv]
    it = 0
    for it in range(1, max_iter + 1):
        gn2 = float(g @ g)
        if math.sqrt(gn2) <= gtol:
            break
        t = step
        while True:
            v_new = v - t * g
            f_new = f(v_new)
            if f_new <= max(history) - 1e-4 * t * gn2 or t < 1e-30:
                break
            t *= 0.5
        g_new = grad(v_new)
        s, y = v_new - v, g_new - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else 1.0 / lip
        v, fv, g = v_new, f_new, g_new
        history = (history + [fv])[-memory:]
    return v, it, float(np.linalg.norm(g))


def solve_min_energy(prob, w=None, method="nullspace", feasibility_tol=None, gradient="affine",
                     max_iter=5000, gtol=1e-8):
    """Minimum-energy control reaching ``prob.xd`` at ``T``.

    Parameters
    ----------
    prob : SteeringProblem
    w : CostWeights, optional
        Defaults to pure energy, ``CostWeights(0, 1)``.
    method : {"nullspace", "penalty"}
    gradient : {"affine", "fd"}
        Penalty-path gradients from the affine model or central differences.

    Returns
    -------
    (ControlSignal, float, dict)
        The control, its cost and a report with ``kkt_residual`` (null-space)
        or ``penalty_defect`` (penalty) plus ``endpoint_error``.
    """
    w = w or CostWeights()
    if method not in ("nullspace", "penalty"):
        raise ValidationError(f"method must be 'nullspace' or 'penalty', got {method!r}")
    if gradient not in ("affine", "fd"):
        raise ValidationError(f"gradient must be 'affine' or 'fd', got {gradient!r}")
    if prob.h.lipschitz_H * prob.op.negpow_norm(prob.h.varsigma) >= 1:
        warnings.warn("existence condition H |A^-varsigma| < 1 fails; solving anyway",
                      RuntimeWarning, stacklevel=2)
    model = AffineModel(prob)
    quad = _Quadratic(model, w)
    Esm = model.endpoint
    if feasibility_tol is None:
        feasibility_tol = FEASIBILITY_TOL * max(prob.xd.norm(), 1e-6)
    report = {"method": method, "degenerate": False}

    if method == "nullspace":
        u_part, _ = min_norm_inverse(Esm, quad.b, feasibility_tol=feasibility_tol)
        v = u_part.as_vector()
        if quad.Q is not None:
            Z = Esm.null_space
            Hr = Z.T @ quad.Q @ Z
            rhs = -Z.T @ quad.grad(v)
            try:
                c = scipy.linalg.cho_factor(Hr)
                y = scipy.linalg.cho_solve(c, rhs)
            except np.linalg.LinAlgError:
                y = np.linalg.lstsq(Hr, rhs, rcond=None)[0]
                report["degenerate"] = True
            v = v + Z @ y
        report["kkt_residual"] = float(np.linalg.norm(_null_project(Esm, quad.grad(v))))
        u = ControlSignal.from_vector(v, prob.grid, prob.N)
    else:
        v = np.zeros(prob.grid.M * prob.N)
        fd = None
        if gradient == "fd":
            fd = lambda x, rho: _fd_gradient(prob, w, x, rho)  # noqa: E731
        stages = []
        for factor in PENALTY_LADDER:
            rho = factor * w.w_energy
            v, its, gnorm = _penalty_stage(quad, model.E, quad.b, rho, v, gtol, max_iter, fd)
            stages.append({"rho": rho, "iterations": its, "grad_norm": gnorm,
                           "converged": gnorm <= gtol})
            log.debug("penalty rho=%.0e: %d iterations, |grad|=%.2e", rho, its, gnorm)
        report["stages"] = stages
        report["penalty_defect"] = float(np.linalg.norm(model.E @ v - quad.b))
        u = project_feasible(prob, ControlSignal.from_vector(v, prob.grid, prob.N), model,
                             feasibility_tol)
    traj = mild_solve(prob, u)
    report["endpoint_error"] = float(np.linalg.norm(traj.states[-1] - prob.xd.coeffs))
    return u, cost(traj, u, w, prob.xd), report
