"""Exact steering by a joint state-control fixed point.

The steering map sends a piecewise-constant control to its contribution
``int_0^T (T-s)^(nu-1) K(T-s) B u(s) ds`` at the final time. Its
minimum-norm inverse turns any target defect into a control; feeding the
control back into the mild-solution operator gives a map ``G`` on whole
trajectories whose fixed point reaches ``x_d`` at ``T``. A contraction
certificate ``q < 1`` built from the problem constants guarantees that the
Picard iteration on ``G`` converges.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gamma

from .evolution import (
    ControlSignal,
    Trajectory,
    control_term,
    lemma2_constant,
    mild_solve,
    neutral_term,
)
from .exceptions import (
    NeutralStiffnessError,
    PicardConvergenceError,
    TargetUnreachableError,
    UncontrollableError,
    ValidationError,
)
from .spectral import SpectralState

__all__ = [
    "CertificateConstants",
    "PicardResult",
    "SteeringMatrix",
    "assemble_steering_matrix",
    "certificate_constants",
    "certificate_terms",
    "contraction_certificate",
    "existence_condition",
    "min_norm_inverse",
    "picard_iterate",
    "synthesize_control",
    "target_defect",
]

log = logging.getLogger(__name__)

RANK_TOL = 1e-10
FEASIBILITY_TOL = 1e-6


@dataclass(frozen=True)
class SteeringMatrix:
    """Linear map from stacked control values to endpoint coefficients.

    Column ``i * N + n`` holds the response to a unit value of control
    channel ``n`` on ``[t_i, t_{i+1})``.

    Parameters
    ----------
    matrix : ndarray, shape (P, M * N)
    grid : GridSpec
    N : int
        Control dimension.
    rank_tol : float
        Relative cutoff: singular values below ``rank_tol * sigma_max`` are
        treated as zero.
    """

    matrix: np.ndarray
    grid: object
    N: int
    rank_tol: float = RANK_TOL
    _svd: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        H = np.array(self.matrix, dtype=float)
        if H.ndim != 2 or H.shape[1] != self.grid.M * self.N:
            raise ValidationError(
                f"matrix shape {H.shape} does not match M*N = {self.grid.M * self.N} columns"
            )
        if not np.all(np.isfinite(H)):
            raise ValidationError("steering matrix has non-finite entries")
        H.setflags(write=False)
        object.__setattr__(self, "matrix", H)
        U, s, Vt = np.linalg.svd(H, full_matrices=False)
        object.__setattr__(self, "_svd", (U, s, Vt))

    @property
    def singular_values(self):
        return self._svd[1]

    @property
    def rank(self):
        s = self.singular_values
        if s.size == 0 or s[0] == 0:
            return 0
        return int(np.sum(s > self.rank_tol * s[0]))

    @property
    def condition_number(self):
        r = self.rank
        return float(self.singular_values[0] / self.singular_values[r - 1]) if r else math.inf

    @property
    def M_2(self):
        """Norm of the minimum-norm inverse as a map into ``L2(0, T; U)``.

        Stacked values ``v`` carry the norm ``sqrt(dt) |v|``, hence
        ``sqrt(dt) / sigma_min`` over the controllable subspace.
        """
        r = self.rank
        return math.sqrt(self.grid.dt) / float(self.singular_values[r - 1]) if r else math.inf

    def apply(self, u):
        vec = u.as_vector() if isinstance(u, ControlSignal) else np.asarray(u, dtype=float)
        return self.matrix @ vec

    def pinv_apply(self, d, ridge=0.0):
        """Filtered SVD solve: ``1/s`` above the rank cutoff, ``s/(s^2+ridge)`` with a ridge."""
        U, s, Vt = self._svd
        r = self.rank
        coef = U[:, :r].T @ d
        if ridge > 0:
            filt = s[:r] / (s[:r] ** 2 + ridge)
        else:
            filt = 1.0 / s[:r]
        return Vt[:r].T @ (filt * coef)

    @cached_property
    def null_space(self):
        """Orthonormal basis of the kernel, shape ``(M * N, M * N - rank)``."""
        _, s, Vt = np.linalg.svd(self.matrix, full_matrices=True)
        return Vt[self.rank:].T


def assemble_steering_matrix(prob, rank_tol=RANK_TOL):
    """Discretized steering map of ``prob`` (open loop, without the neutral term).

    Raises
    ------
    UncontrollableError
        If no singular value exceeds the rank cutoff (for example ``B = 0``).
    """
    M, N = prob.grid.M, prob.N
    C = prob.control_kernel  # (M, P) by lag
    # interval i sits at lag M - 1 - i from T
    H = (C[::-1, :, None] * prob.B[None, :, :]).transpose(1, 0, 2).reshape(prob.P, M * N)
    sm = SteeringMatrix(H, prob.grid, N, rank_tol)
    if sm.rank == 0:
        raise UncontrollableError(
            "steering matrix is numerically zero; the control operator reaches no mode"
        )
    return sm


def min_norm_inverse(Hmat, target, ridge=0.0, feasibility_tol=None):
    """Least-squares minimum-norm preimage of ``target``.

    Parameters
    ----------
    Hmat : SteeringMatrix or ndarray
        A plain array returns a plain vector; a :class:`SteeringMatrix`
        returns a :class:`ControlSignal`.
    target : SpectralState or array_like
    ridge : float
        Tikhonov parameter; ``0`` gives the Moore-Penrose solution.
    feasibility_tol : float, optional
        Allowed residual when ``ridge == 0``. Defaults to
        ``1e-6 * max(|target|, 1e-6)``.

    Returns
    -------
    (control, residual)
    """
    d = target.coeffs if isinstance(target, SpectralState) else np.asarray(target, dtype=float)
    if ridge < 0 or not math.isfinite(ridge):
        raise ValidationError(f"ridge must be a finite nonnegative number, got {ridge}")
    raw = not isinstance(Hmat, SteeringMatrix)
    if raw:
        H = np.atleast_2d(np.asarray(Hmat, dtype=float))
        if H.shape[0] != d.size:
            raise ValidationError(f"target has {d.size} entries, matrix has {H.shape[0]} rows")
        U, s, Vt = np.linalg.svd(H, full_matrices=False)
        r = int(np.sum(s > RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
        filt = s[:r] / (s[:r] ** 2 + ridge) if ridge > 0 else 1.0 / s[:r]
        u = Vt[:r].T @ (filt * (U[:, :r].T @ d))
        residual = float(np.linalg.norm(H @ u - d))
    else:
        if Hmat.matrix.shape[0] != d.size:
            raise ValidationError(f"target has {d.size} entries, matrix has {Hmat.matrix.shape[0]} rows")
        u = Hmat.pinv_apply(d, ridge)
        residual = float(np.linalg.norm(Hmat.matrix @ u - d))
    if feasibility_tol is None:
        feasibility_tol = FEASIBILITY_TOL * max(float(np.linalg.norm(d)), 1e-6)
    if ridge == 0 and residual > feasibility_tol:
        raise TargetUnreachableError(
            f"target defect has a component of norm {residual:.3g} outside the controllable "
            f"subspace (tolerance {feasibility_tol:.3g})",
            residual=residual,
        )
    if raw:
        return u, residual
    return ControlSignal.from_vector(u, Hmat.grid, Hmat.N), residual


def target_defect(prob, states):
    """Endpoint defect ``x_d - S(T)[x0 - h(x0)] - h(x_T) - (neutral Volterra term at T)``."""
    X = states.states if isinstance(states, Trajectory) else np.asarray(states)
    y0 = prob.x0.coeffs - prob.h(prob.x0.coeffs)
    d = prob.xd.coeffs - prob.s_table[-1] * y0
    if not prob.h.is_zero:
        d = d - prob.h(X[-1]) - neutral_term(prob, X)[-1]
    return d


def synthesize_control(prob, traj, Hmat=None, ridge=0.0, feasibility_tol=None):
    """Control that steers to ``x_d`` given the neutral feedback of ``traj``."""
    if traj.grid != prob.grid:
        raise ValidationError("trajectory grid does not match the problem")
    if Hmat is None:
        Hmat = assemble_steering_matrix(prob)
    u, _ = min_norm_inverse(Hmat, target_defect(prob, traj), ridge, feasibility_tol)
    return u


def _apply_G(prob, X, Hmat, ridge, feasibility_tol):
    y0 = prob.x0.coeffs - prob.h(prob.x0.coeffs)
    u, _ = min_norm_inverse(Hmat, target_defect(prob, X), ridge, feasibility_tol)
    out = prob.s_table * y0[None, :] + control_term(prob, u)
    if not prob.h.is_zero:
        out = out + prob.h(X) + neutral_term(prob, X)
    return out, u


@dataclass
class PicardResult:
    """Outcome of :func:`picard_iterate`.

    ``iterations`` counts correction sweeps; the final sweep that confirms
    the stopping test is not counted. ``ratios[k] = deltas[k+1] / deltas[k]``.
    """

    trajectory: Trajectory
    control: ControlSignal
    iterations: int
    ratios: list
    deltas: list
    endpoint_error: float
    target_norm: float

    @property
    def relative_endpoint_error(self):
        return self.endpoint_error / max(self.target_norm, 1e-300)


def picard_iterate(prob, tol=1e-9, max_iter=200, ridge=0.0, init="free", Hmat=None,
                   feasibility_tol=None):
    """Fixed-point iteration ``x <- G(x)`` with the control re-synthesized each sweep.

    Parameters
    ----------
    prob : SteeringProblem
    tol : float
        Stop when the sup-norm change over the grid drops below ``tol``.
    max_iter : int
    ridge : float
        Tikhonov parameter passed to :func:`min_norm_inverse`.
    init : {"free", "zero"}
        Initial trajectory: the uncontrolled solution, or zero. ``"free"``
        falls back to zero if the uncontrolled solve is too stiff.

    Returns
    -------
    PicardResult

    Raises
    ------
    PicardConvergenceError
        After ``max_iter`` sweeps or on blow-up; carries the full history.
    """
    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    if int(max_iter) != max_iter or max_iter < 1:
        raise ValidationError(f"max_iter must be a positive integer, got {max_iter}")
    if init not in ("free", "zero"):
        raise ValidationError(f"init must be 'free' or 'zero', got {init!r}")
    if Hmat is None:
        Hmat = assemble_steering_matrix(prob)
    X = np.zeros((prob.grid.M + 1, prob.P))
    if init == "free":
        try:
            X = np.array(mild_solve(prob).states)
        except NeutralStiffnessError:
            log.info("uncontrolled solve too stiff, starting from zero")
    deltas, ratios = [], []
    for k in range(int(max_iter) + 1):
        X_new, u = _apply_G(prob, X, Hmat, ridge, feasibility_tol)
        delta = float(np.max(np.abs(X_new - X)))
        if deltas and deltas[-1] > 0:
            ratios.append(delta / deltas[-1])
        deltas.append(delta)
        log.debug("picard sweep %d: delta=%.3e", k + 1, delta)
        X = X_new
        if delta < tol:
            traj = Trajectory(X, prob.grid)
            err = float(np.linalg.norm(X[-1] - prob.xd.coeffs))
            return PicardResult(traj, u, max(len(deltas) - 1, 1), ratios, deltas, err,
                                prob.xd.norm())
        if not math.isfinite(delta) or delta > 1e100:
            raise PicardConvergenceError(
                f"Picard iteration blew up after {k + 1} sweeps (delta={delta:.3g}); "
                "the contraction certificate is likely violated",
                ratios, deltas,
            )
    raise PicardConvergenceError(
        f"Picard iteration did not reach tol={tol:g} in {max_iter} sweeps "
        f"(last delta={deltas[-1]:.3g}); the contraction certificate is likely violated",
        ratios, deltas,
    )


@dataclass(frozen=True)
class CertificateConstants:
    """Constants entering the contraction certificate.

    ``M_2`` bounds the inverse steering map and ``L`` is the kernel constant
    ``L_{1-varsigma}`` from :func:`fracsteer.evolution.lemma2_constant`.
    """

    M_T: float
    M_1: float
    M_2: float
    L: float
    H: float
    A_negpow: float
    nu: float
    varsigma: float
    T: float

    def __post_init__(self):
        for name in ("M_T", "M_1", "M_2", "L", "H", "A_negpow", "T"):
            v = getattr(self, name)
            if not (v >= 0):
                raise ValidationError(f"{name} must be nonnegative, got {v}")
        if self.M_T < 1:
            raise ValidationError(f"M_T must be at least 1, got {self.M_T}")
        if not 0 < self.nu < 1 or not 0 < self.varsigma < 1:
            raise ValidationError("nu and varsigma must lie in (0, 1)")


def certificate_constants(prob, Hmat=None, **overrides):
    """Evaluate every certificate constant for ``prob``; keywords override."""
    if Hmat is None:
        Hmat = assemble_steering_matrix(prob)
    vs = prob.h.varsigma
    values = dict(
        M_T=1.0,
        M_1=float(prob.M_1),
        M_2=Hmat.M_2,
        L=lemma2_constant(prob.nu, prob.op, 1 - vs, prob.grid.T),
        H=prob.h.lipschitz_H,
        A_negpow=prob.op.negpow_norm(vs),
        nu=prob.nu,
        varsigma=vs,
        T=prob.grid.T,
    )
    unknown = set(overrides) - set(values)
    if unknown:
        raise ValidationError(f"unknown certificate constants: {sorted(unknown)}")
    values.update({k: float(v) for k, v in overrides.items() if v is not None})
    return CertificateConstants(**values)


def certificate_terms(c):
    """Breakdown of the certificate; ``q = bracket * H``."""
    nu, vs, T = c.nu, c.varsigma, c.T
    smoothing = c.L * gamma(1 + vs) / (vs * gamma(1 + nu * vs)) * T ** (nu * vs)
    inner = c.A_negpow + smoothing
    control = c.M_2 * c.M_T * c.M_1 / gamma(1 + nu) * T**nu
    bracket = inner + control * inner
    return {
        "A_negpow": c.A_negpow,
        "smoothing": float(smoothing),
        "neutral": float(inner),
        "control_gain": float(control),
        "control": float(control * inner),
        "bracket": float(bracket),
        "H": c.H,
        "q": float(bracket * c.H),
    }


def contraction_certificate(c):
    """Return ``(q, q < 1)``."""
    q = 0.0 if c.H == 0 else certificate_terms(c)["q"]
    return q, q < 1


def existence_condition(c):
    """``H |A^(-varsigma)| < 1``."""
    return c.H * c.A_negpow < 1
