"""Diagonal spectral representation of the generator and its fractional powers.

The state space is L2(0, 1) truncated to the first ``P`` eigenmodes of a
positive self-adjoint operator ``A``. States are coefficient vectors in the
orthonormal eigenbasis, so norms are plain Euclidean norms (Parseval) and
every function of ``A`` acts as a per-mode multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .exceptions import ValidationError

DIRICHLET_SINE = "dirichlet-sine"

__all__ = [
    "DIRICHLET_SINE",
    "GridSpec",
    "SpectralOperator",
    "SpectralState",
    "fractional_power_apply",
    "make_dirichlet_laplacian",
    "project",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpectralOperator:
    """Positive diagonal operator ``A e_p = lambda_p e_p``.

    The generator of the dynamics is ``-A``, so the semigroup acts on mode
    ``p`` as ``exp(-lambda_p t)``.
    """

    eigenvalues: np.ndarray
    basis_kind: str = DIRICHLET_SINE

    def __post_init__(self):
        lam = _frozen(np.atleast_1d(self.eigenvalues))
        if lam.ndim != 1 or lam.size < 1:
            raise ValidationError("operator needs at least one eigenvalue")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ValidationError("eigenvalues must be finite and strictly positive")
        if np.any(np.diff(lam) <= 0):
            raise ValidationError("eigenvalues must be strictly increasing")
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def P(self):
        return self.eigenvalues.size

    def power(self, mu):
        """Per-mode multipliers ``lambda_p ** mu``."""
        return self.eigenvalues ** float(mu)

    def negpow_norm(self, varsigma):
        """Operator norm of ``A^(-varsigma)``, i.e. ``lambda_1 ** -varsigma``."""
        return float(self.eigenvalues[0] ** (-float(varsigma)))

    def eigenfunctions(self, z):
        """Evaluate the basis on points ``z``; returns shape ``(P, len(z))``."""
        if self.basis_kind != DIRICHLET_SINE:
            raise ValidationError(f"no closed-form basis for {self.basis_kind!r}")
        z = np.asarray(z, dtype=float)
        p = np.arange(1, self.P + 1)[:, None]
        return np.sqrt(2.0) * np.sin(p * np.pi * z[None, :])

    def synthesize(self, state, z):
        """Evaluate the function represented by ``state`` at points ``z``."""
        coeffs = state.coeffs if isinstance(state, SpectralState) else np.asarray(state)
        return coeffs @ self.eigenfunctions(z)


@dataclass(frozen=True)
class SpectralState:
    """Coefficients ``(x, e_p)`` of a state in the eigenbasis."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = _frozen(np.atleast_1d(self.coeffs))
        if c.ndim != 1:
            raise ValidationError("state coefficients must be a 1-D vector")
        if not np.all(np.isfinite(c)):
            raise ValidationError("state coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def P(self):
        return self.coeffs.size

    def norm(self):
        return float(np.linalg.norm(self.coeffs))

    @classmethod
    def zeros(cls, P):
        return cls(np.zeros(P))

    @classmethod
    def from_list(cls, values, P):
        """Zero-pad a (possibly shorter) coefficient list to length ``P``."""
        values = np.asarray(values, dtype=float).ravel()
        if values.size > P:
            raise ValidationError(f"{values.size} coefficients given for P={P} modes")
        out = np.zeros(P)
        out[: values.size] = values
        return cls(out)


@dataclass(frozen=True)
class GridSpec:
    """Uniform time grid ``t_j = j T / M``, ``j = 0..M``."""

    T: float
    M: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValidationError(f"final time must be positive, got T={self.T}")
        if int(self.M) != self.M or self.M < 2:
            raise ValidationError(f"need at least 2 time steps, got M={self.M}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "nodes", _frozen(np.linspace(0.0, self.T, self.M + 1)))

    @property
    def dt(self):
        return self.T / self.M

    @property
    def midpoints(self):
        return (np.arange(self.M) + 0.5) * self.dt

    def refined(self, factor=2):
        return GridSpec(self.T, self.M * factor)


def make_dirichlet_laplacian(P):
    """Truncated Dirichlet Laplacian on (0, 1): ``lambda_p = (p pi)^2``.

    Basis functions are ``e_p(z) = sqrt(2) sin(p pi z)``.
    """
    if int(P) != P or P < 1:
        raise ValidationError(f"mode count must be a positive integer, got P={P}")
    p = np.arange(1, int(P) + 1, dtype=float)
    return SpectralOperator((p * np.pi) ** 2, DIRICHLET_SINE)


def project(f, op, z=None):
    """Project a function on (0, 1) onto the eigenbasis of ``op``.

    Parameters
    ----------
    f : callable or array_like
        Either a vectorized callable of ``z`` or samples on ``z``.
    op : SpectralOperator
    z : array_like, optional
        Uniform sample points covering [0, 1]. Defaults to ``max(64 P, 257)``
        points when ``f`` is callable; required shape match otherwise.

    Returns
    -------
    SpectralState
        Trapezoid-rule coefficients ``int_0^1 f(z) e_p(z) dz``.
    """
    if z is None:
        if callable(f):
            z = np.linspace(0.0, 1.0, max(64 * op.P, 257))
        else:
            z = np.linspace(0.0, 1.0, np.asarray(f).size)
    z = np.asarray(z, dtype=float)
    values = np.asarray(f(z) if callable(f) else f, dtype=float)
    if values.shape != z.shape:
        raise ValidationError("sample values and sample points differ in shape")
    if z.size < 4 * op.P:
        raise ValidationError(
            f"{z.size} samples cannot resolve {op.P} modes (need at least {4 * op.P})"
        )
    coeffs = trapezoid(op.eigenfunctions(z) * values[None, :], z, axis=1)
    return SpectralState(coeffs)


def fractional_power_apply(op, mu, x):
    """Apply ``A^mu``; negative ``mu`` gives the inverse power."""
    if x.P != op.P:
        raise ValidationError(f"state has {x.P} modes, operator has {op.P}")
    return SpectralState(op.power(mu) * x.coeffs)
