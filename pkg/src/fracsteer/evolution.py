"""Mild solution of the neutral fractional evolution equation.

The system is ``D^nu [x - h(x)] = -A x + B u`` with a Caputo derivative of
order ``nu``. On the eigenbasis of ``A`` its mild solution reads, per node
``t_j``::

    x(t_j) = S(t_j)[x0 - h(x0)] + h(x(t_j))
             + int_0^t (t-s)^(nu-1) (-A) K(t-s) h(x(s)) ds
             + int_0^t (t-s)^(nu-1) K(t-s) B u(s) ds

with ``S`` and ``K`` acting as ``E_nu(-lam t^nu)`` and
``E_{nu,nu}(-lam t^nu)``. The Volterra integrals use product integration
over each subinterval: by default the full kernel is integrated exactly,
and the ``midpoint`` rule instead freezes ``K`` at the subinterval midpoint.
Controls are piecewise constant; the neutral term uses the subinterval
average of ``h(x)``, which makes the newest node implicit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy.special import gamma

from .exceptions import NeutralStiffnessError, ValidationError
from .mittag_leffler import k_kernel, s_kernel
from .spectral import GridSpec, SpectralOperator, SpectralState

__all__ = [
    "ControlSignal",
    "NeutralMap",
    "SteeringProblem",
    "Trajectory",
    "caputo_residual",
    "lemma2_constant",
    "mild_solve",
    "neutral_eval",
    "residual_ratio",
    "singular_quad_weights",
]

QUADRATURES = ("midpoint", "exact")
_IMPLICIT_TOL = 1e-12
_IMPLICIT_MAXITER = 500


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NeutralMap:
    """Linear neutral term ``h(x) = F x`` on mode coefficients.

    ``lipschitz_H`` bounds ``|A^varsigma F|`` and ``growth_H1`` bounds
    ``|A^varsigma F x| / (|x| + 1)``; use :meth:`from_kernel` to compute both.
    """

    kernel: np.ndarray
    lipschitz_H: float
    growth_H1: float
    varsigma: float = 0.5

    def __post_init__(self):
        F = _readonly(np.atleast_2d(self.kernel))
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise ValidationError("neutral kernel must be a square matrix")
        if not np.all(np.isfinite(F)):
            raise ValidationError("neutral kernel must be finite")
        if not 0 < self.varsigma < 1:
            raise ValidationError(f"varsigma must lie in (0, 1), got {self.varsigma}")
        if self.lipschitz_H < 0 or self.growth_H1 < 0:
            raise ValidationError("Lipschitz and growth constants must be nonnegative")
        object.__setattr__(self, "kernel", F)

    @classmethod
    def from_kernel(cls, kernel, op, varsigma=0.5):
        F = np.asarray(kernel, dtype=float)
        H = _smoothed_norm(F, op, varsigma)
        return cls(F, H, H, varsigma)

    @classmethod
    def zero(cls, P, varsigma=0.5):
        return cls(np.zeros((P, P)), 0.0, 0.0, varsigma)

    @property
    def P(self):
        return self.kernel.shape[0]

    @property
    def is_zero(self):
        return not np.any(self.kernel)

    def __call__(self, x):
        """Apply to coefficient arrays with modes on the last axis."""
        return np.asarray(x) @ self.kernel.T

    def check(self, op, n_probes=32, seed=0):
        """Verify the declared constants against ``op``; return violations."""
        problems = []
        H = _smoothed_norm(self.kernel, op, self.varsigma)
        if H > self.lipschitz_H * (1 + 1e-10) + 1e-300:
            problems.append(f"|A^varsigma F| = {H:.6g} exceeds declared H = {self.lipschitz_H:.6g}")
        rng = np.random.default_rng(seed)
        AF = op.power(self.varsigma)[:, None] * self.kernel
        for _ in range(n_probes):
            x = rng.standard_normal(self.P) * rng.uniform(0.01, 100)
            lhs = np.linalg.norm(AF @ x)
            if lhs > self.growth_H1 * (np.linalg.norm(x) + 1) * (1 + 1e-10):
                problems.append(f"growth bound violated: {lhs:.6g} > H1 (|x| + 1)")
                break
        return problems


def _smoothed_norm(F, op, varsigma):
    if F.shape != (op.P, op.P):
        raise ValidationError(f"kernel shape {F.shape} does not match P={op.P}")
    return float(np.linalg.norm(op.power(varsigma)[:, None] * F, 2)) if F.size else 0.0


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant control: row ``i`` holds ``u`` on ``[t_i, t_{i+1})``."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        v = _readonly(np.atleast_2d(self.values))
        if v.shape[0] != self.grid.M:
            raise ValidationError(f"control has {v.shape[0]} rows, grid has M={self.grid.M}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("control values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def N(self):
        return self.values.shape[1]

    @classmethod
    def zeros(cls, grid, N):
        return cls(np.zeros((grid.M, N)), grid)

    @classmethod
    def from_vector(cls, vec, grid, N):
        return cls(np.asarray(vec, dtype=float).reshape(grid.M, N), grid)

    def as_vector(self):
        return self.values.ravel()

    def l2_norm(self):
        """``||u||_{L2(0,T)}``; exact for piecewise-constant controls."""
        return math.sqrt(self.grid.dt * float(np.sum(self.values**2)))

    def __call__(self, t):
        """Evaluate at times ``t`` (right-continuous; the last piece extends to T)."""
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.floor(t / self.grid.dt).astype(int), 0, self.grid.M - 1)
        return self.values[idx]

    def __add__(self, other):
        return ControlSignal(self.values + other.values, self.grid)

    def __mul__(self, c):
        return ControlSignal(float(c) * self.values, self.grid)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Trajectory:
    """Mode coefficients at every grid node: row ``j`` is ``x(t_j)``."""

    states: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        X = _readonly(np.atleast_2d(self.states))
        if X.shape[0] != self.grid.M + 1:
            raise ValidationError(f"trajectory has {X.shape[0]} rows, grid needs {self.grid.M + 1}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("trajectory contains non-finite values")
        object.__setattr__(self, "states", X)

    @property
    def P(self):
        return self.states.shape[1]

    @property
    def final(self):
        return SpectralState(self.states[-1])

    def sup_distance(self, other):
        return float(np.max(np.abs(self.states - other.states)))

    def to_csv(self, path, header_prefix="x"):
        _write_table(path, self.grid.nodes, self.states, header_prefix)

    def to_json(self, path, **metadata):
        doc = {
            "metadata": {"P": self.P, "M": self.grid.M, "T": self.grid.T, **metadata},
            "t": self.grid.nodes.tolist(),
            "states": self.states.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)


def _write_table(path, t, values, prefix):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"{prefix}_{k + 1}" for k in range(values.shape[1])])
        for ti, row in zip(t, values):
            w.writerow([repr(float(ti))] + [repr(float(v)) for v in row])


@dataclass(frozen=True)
class SteeringProblem:
    """One instance of the controlled neutral system.

    ``nu = 1`` is accepted as the classical (integer-order) limit.
    ``M_1`` defaults to ``|B|_2``.
    """

    nu: float
    op: SpectralOperator
    B: np.ndarray
    h: NeutralMap
    x0: SpectralState
    xd: SpectralState
    grid: GridSpec
    M_1: float | None = None
    name: str = "problem"
    quadrature: str = "exact"

    def __post_init__(self):
        if self.quadrature not in QUADRATURES:
            raise ValidationError(f"quadrature must be one of {QUADRATURES}, got {self.quadrature!r}")
        if not 0 < self.nu <= 1:
            raise ValidationError(f"nu must lie in (0, 1], got {self.nu}")
        B = _readonly(np.atleast_2d(self.B))
        P = self.op.P
        if B.shape[0] != P:
            raise ValidationError(f"B has {B.shape[0]} rows, operator has P={P}")
        if B.shape[1] > P:
            raise ValidationError(f"control dimension N={B.shape[1]} exceeds P={P}")
        object.__setattr__(self, "B", B)
        for name in ("x0", "xd"):
            if getattr(self, name).P != P:
                raise ValidationError(f"{name} has {getattr(self, name).P} modes, need {P}")
        if self.h.P != P:
            raise ValidationError(f"neutral kernel is {self.h.P}x{self.h.P}, need P={P}")
        bnorm = float(np.linalg.norm(B, 2))
        if self.M_1 is None:
            object.__setattr__(self, "M_1", bnorm)
        elif bnorm > self.M_1 * (1 + 1e-12):
            raise ValidationError(f"|B| = {bnorm:.6g} exceeds declared M_1 = {self.M_1:.6g}")
        violations = self.h.check(self.op)
        if violations:
            raise ValidationError("; ".join(violations))

    @property
    def P(self):
        return self.op.P

    @property
    def N(self):
        return self.B.shape[1]

    def with_grid(self, grid):
        return replace(self, grid=grid)

    def with_target(self, xd):
        return replace(self, xd=xd)

    # kernel tables, shared by the solver, the steering map and the residual

    @cached_property
    def lag_weights(self):
        """Singular weights by lag ``m``: subinterval ``[t_{j-m-1}, t_{j-m}]`` seen from ``t_j``."""
        return singular_quad_weights(self.nu, self.grid, self.grid.T)[::-1]

    @cached_property
    def s_table(self):
        """``E_nu(-lam_p t_j^nu)``, shape ``(M + 1, P)``."""
        return s_kernel(self.nu, self.grid.nodes[:, None], self.op.eigenvalues[None, :])

    @cached_property
    def control_kernel(self):
        """Integrated ``tau^(nu-1) K(tau)`` per lag subinterval and mode, shape ``(M, P)``.

        ``midpoint`` freezes ``K`` at the subinterval midpoint and integrates
        the singular factor exactly. ``exact`` integrates the whole kernel,
        ``(E_nu(-lam a^nu) - E_nu(-lam b^nu)) / lam`` on ``[a, b]``.
        """
        lam = self.op.eigenvalues[None, :]
        if self.quadrature == "exact":
            s = self.s_table
            return (s[:-1] - s[1:]) / lam
        kmid = k_kernel(self.nu, self.grid.midpoints[:, None], lam)
        return self.lag_weights[:, None] * kmid

    @cached_property
    def neutral_kernel(self):
        """Lag kernel of the ``(-A) K h`` term, shape ``(M, P)``."""
        return -self.op.eigenvalues[None, :] * self.control_kernel


def singular_quad_weights(nu, grid, t_target):
    """Product-integration weights for ``int_0^t (t - s)^(nu - 1) f(s) ds``.

    Exact for ``f`` constant on each subinterval ``[s_i, s_{i+1}]`` left of
    ``t_target``: ``w_i = ((t - s_i)^nu - (t - s_{i+1})^nu) / nu``.
    """
    j = int(round(t_target / grid.dt))
    if not math.isclose(j * grid.dt, t_target, rel_tol=1e-12, abs_tol=1e-15) or not 0 <= j <= grid.M:
        raise ValidationError(f"t_target={t_target} is not a grid node")
    if j == 0:
        return np.zeros(0)
    s = grid.nodes[: j + 1]
    r = (grid.nodes[j] - s).clip(min=0.0) ** nu
    return (r[:-1] - r[1:]) / nu


def neutral_eval(h, x):
    """``h(x)`` for a spectral state."""
    if x.P != h.P:
        raise ValidationError(f"state has {x.P} modes, neutral map has {h.P}")
    return SpectralState(h(x.coeffs))


def causal_conv(kernel, data):
    """``out[n] = sum_{i <= n} kernel[n - i] * data[i]`` along axis 0.

    ``kernel`` has shape ``(M, P)``; ``data`` has shape ``(M, P, ...)``.
    """
    M = kernel.shape[0]
    lag = np.arange(M)[:, None] - np.arange(M)[None, :]
    toe = np.where(lag[..., None] >= 0, kernel[np.clip(lag, 0, None)], 0.0)  # (M, M, P)
    return np.einsum("nip,ip...->np...", toe, data)


def control_term(prob, u):
    """Volterra control contribution at every node, shape ``(M + 1, P)``."""
    if u.grid != prob.grid or u.N != prob.N:
        raise ValidationError("control grid or dimension does not match the problem")
    out = np.zeros((prob.grid.M + 1, prob.P))
    out[1:] = causal_conv(prob.control_kernel, u.values @ prob.B.T)
    return out


def neutral_term(prob, X):
    """Explicit neutral Volterra term evaluated on a trajectory array."""
    hx = prob.h(X)
    hbar = 0.5 * (hx[:-1] + hx[1:])
    out = np.zeros_like(hx)
    out[1:] = causal_conv(prob.neutral_kernel, hbar)
    return out


def _march(prob, base):
    """Solve ``x_j = base_j + h(x_j) + neutral Volterra term`` node by node.

    ``base`` has shape ``(M + 1, P)`` or ``(M + 1, P, k)`` for ``k`` right-hand
    sides; row 0 is taken as the initial state. The newest node is resolved by
    fixed-point iteration.
    """
    X = np.array(base, dtype=float)
    if prob.h.is_zero:
        return X
    F = prob.h.kernel
    Nk = prob.neutral_kernel
    M = prob.grid.M
    extra = (slice(None),) + (None,) * (X.ndim - 2)
    hx = np.zeros_like(X)
    hx[0] = np.einsum("pq,q...->p...", F, X[0])
    hbar = np.zeros_like(X[1:])
    half0 = 0.5 * Nk[0][extra]
    for j in range(1, M + 1):
        known = base[j] + half0 * hx[j - 1]
        if j > 1:
            # lags m = 1..j-1 pair with averaged subintervals j-1-m
            known = known + np.einsum("mp,mp...->p...", Nk[1:j], hbar[j - 2::-1])
        x = X[j - 1].copy()
        for it in range(_IMPLICIT_MAXITER):
            hxj = np.einsum("pq,q...->p...", F, x)
            x_new = known + hxj + half0 * hxj
            change = np.max(np.abs(x_new - x))
            x = x_new
            if not np.isfinite(change) or change > 1e150:
                break
            if change <= _IMPLICIT_TOL * (1.0 + np.max(np.abs(x))):
                break
        else:
            change = np.inf
        if not (change <= _IMPLICIT_TOL * (1.0 + np.max(np.abs(x)))):
            raise NeutralStiffnessError(
                f"implicit neutral iteration diverged at step {j} (t={prob.grid.nodes[j]:.6g}); "
                "the neutral kernel is too strong for the per-step fixed point",
                step=j,
            )
        X[j] = x
        hx[j] = np.einsum("pq,q...->p...", F, x)
        hbar[j - 1] = 0.5 * (hx[j - 1] + hx[j])
    return X


def initial_part(prob):
    """``S(t_j)[x0 - h(x0)]`` at every node, with row 0 set to ``x0``."""
    y0 = prob.x0.coeffs - prob.h(prob.x0.coeffs)
    base = prob.s_table * y0[None, :]
    base[0] = prob.x0.coeffs
    return base


def mild_solve(prob, u=None):
    """Trajectory of the discretized mild solution driven by ``u`` (zero if None)."""
    if u is None:
        u = ControlSignal.zeros(prob.grid, prob.N)
    base = initial_part(prob) + control_term(prob, u)
    base[0] = prob.x0.coeffs
    return Trajectory(_march(prob, base), prob.grid)


def pulse_responses(prob):
    """Zero-initial-state response to a unit control pulse on ``[t_0, t_1)``.

    Returns shape ``(M + 1, P, N)``. The discrete system is causal and
    shift-invariant, so a pulse on ``[t_i, t_{i+1})`` produces the same
    response delayed by ``i`` steps.
    """
    M, P, N = prob.grid.M, prob.P, prob.N
    base = np.zeros((M + 1, P, N))
    base[1:] = prob.control_kernel[:, :, None] * prob.B[None, :, :]
    return _march(prob, base)


def caputo_residual(prob, traj, u):
    """Residual of the differential form at interior nodes, via the L1 scheme.

    Applies the L1 discretization of the Caputo derivative to
    ``y = x - h(x)`` and returns ``|D^nu y(t_j) + A x(t_j) - B u(t_j-)|`` for
    ``j = 1..M-1``, where ``u(t_j-)`` is the control on ``[t_{j-1}, t_j)``.
    """
    if traj.grid != prob.grid:
        raise ValidationError("trajectory grid does not match the problem")
    nu, dt, M = prob.nu, prob.grid.dt, prob.grid.M
    X = traj.states
    Y = X - prob.h(X)
    dY = np.diff(Y, axis=0)  # (M, P)
    m = np.arange(M)
    b = (m + 1.0) ** (1 - nu) - m ** (1 - nu)
    deriv = causal_conv(np.repeat(b[:, None], prob.P, axis=1), dY) / (gamma(2 - nu) * dt**nu)
    rhs = -prob.op.eigenvalues[None, :] * X[1:] + u.values @ prob.B.T
    res = deriv - rhs
    return np.linalg.norm(res[:-1], axis=1)


def lemma2_constant(nu, op, mu, T, n_samples=400):
    """Smallest ``L_mu`` with ``lam^mu K(t) <= nu L_mu t^(-nu mu) Gamma(2-mu)/Gamma(1+nu(1-mu))``.

    Computed as the sup of the ratio over all modes and a log-spaced time
    sample on ``(0, T]``.
    """
    t = T * np.logspace(-10, 0, n_samples)
    lam = op.eigenvalues
    kk = k_kernel(nu, t[:, None], lam[None, :])
    ratio = t[:, None] ** (nu * mu) * lam[None, :] ** mu * kk / nu
    return float(ratio.max() * gamma(1 + nu * (1 - mu)) / gamma(2 - mu))


def residual_ratio(coarse, fine):
    """Decay of the Caputo residual under grid doubling.

    ``coarse`` and ``fine`` are ``(problem, trajectory, control)`` triples on
    grids with ``M`` and ``2 M`` steps. Both residuals are compared at the
    interior nodes of the coarse grid, so the ratio measures convergence at
    fixed times rather than at ever finer first nodes.
    """
    pc, tc, uc = coarse
    pf, tf, uf = fine
    if pf.grid.M != 2 * pc.grid.M or not math.isclose(pf.grid.T, pc.grid.T):
        raise ValidationError("fine grid must double the coarse grid on the same interval")
    rc = caputo_residual(pc, tc, uc)
    rf = caputo_residual(pf, tf, uf)[1::2]
    return float(np.max(rc) / np.max(rf))
