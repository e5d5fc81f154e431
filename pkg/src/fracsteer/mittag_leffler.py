"""Mittag-Leffler function on the negative real axis and Wright-type densities.

``E_{a,b}(z) = sum_k z^k / Gamma(a k + b)`` is evaluated for ``z <= 0`` and
``0 < a <= 1`` by one of four routes, chosen per argument:

* closed forms for ``a == 1`` (``exp`` and relatives);
* the power series in double precision when its largest term is small
  enough that cancellation stays below ``tol``;
* the optimally truncated asymptotic expansion
  ``-sum_{k>=1} z^-k / Gamma(b - a k)`` for ``|z| > series_cutoff`` when its
  first omitted term is below ``tol``;
* otherwise the power series in extended precision (mpmath), with the
  working precision sized from the largest term.

The solution operators of a fractional relaxation act on an eigenmode with
eigenvalue ``lam`` through ``s_kernel = E_nu(-lam t^nu)`` and
``k_kernel = E_{nu,nu}(-lam t^nu)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import mpmath
import numpy as np
from scipy.special import gammaln, gammasgn, rgamma

from .exceptions import AccuracyError, ValidationError

__all__ = [
    "MLParams",
    "MLResult",
    "k_kernel",
    "ml",
    "ml_eval",
    "phi_density",
    "s_kernel",
    "wright_psi",
]

_EPS = np.finfo(float).eps
_MAX_DPS = 4000
_MAX_TERMS = 400_000


@dataclass(frozen=True)
class MLParams:
    alpha: float
    beta: float = 1.0
    series_cutoff: float = 5.0
    tol: float = 1e-12

    def __post_init__(self):
        _check_params(self.alpha, self.beta, self.tol)
        if not self.series_cutoff > 0:
            raise ValidationError("series_cutoff must be positive")


class MLResult(NamedTuple):
    value: float
    error_bound: float
    method: str


def _check_params(alpha, beta, tol):
    if not 0 < alpha <= 1:
        raise ValidationError(f"alpha must lie in (0, 1], got {alpha}")
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol}")


def _series_log_max(alpha, beta, x):
    """Largest ``log(x^k / Gamma(alpha k + beta))`` over k, for ``x > 0``."""
    # the maximizing k satisfies alpha * psi(alpha k + beta) ~ log x
    kpeak = max(0.0, (x ** (1.0 / alpha) - beta) / alpha)
    k = np.arange(max(0, int(kpeak) - 3), int(kpeak) + 4)
    return float(np.max(k * math.log(x) - gammaln(alpha * k + beta)))


def _series_float(alpha, beta, x):
    """Power series at ``z = -x`` in double precision; vectorized over ``x``."""
    xmax = float(np.max(x))
    # terms decay once Gamma outgrows x^k; sized so the tail is below 1e-18
    k = np.arange(0, 8 + int(3 * (xmax + 1) ** (1.0 / alpha) / alpha) + 40)
    with np.errstate(divide="ignore"):
        logx = np.log(x)[:, None]
    logt = k[None, :] * logx - gammaln(alpha * k[None, :] + beta)
    logt[:, 0] = -gammaln(beta)
    mags = np.exp(logt)
    signs = np.where(k % 2 == 0, 1.0, -1.0)
    value = mags @ signs
    bound = 4 * _EPS * mags.sum(axis=1) + mags[:, -1]
    return value, bound


@lru_cache(maxsize=200_000)
def _series_mp(alpha, beta, x, tol):
    """Power series at ``z = -x`` in extended precision."""
    lmax = _series_log_max(alpha, beta, x)
    dps = int(lmax / math.log(10)) + int(-math.log10(tol)) + 12
    if dps > _MAX_DPS:
        raise AccuracyError(
            f"E_{{{alpha},{beta}}}({-x}) needs {dps} digits of working precision",
            achieved_bound=math.inf,
        )
    with mpmath.workdps(dps):
        z = -mpmath.mpf(x)
        a = mpmath.mpf(alpha)
        b = mpmath.mpf(beta)
        total = mpmath.mpf(0)
        zk = mpmath.mpf(1)
        kpeak = (x ** (1.0 / alpha) - beta) / alpha
        stop = mpmath.mpf(tol) * mpmath.mpf(10) ** -3
        for k in range(_MAX_TERMS):
            term = zk * mpmath.rgamma(a * k + b)
            total += term
            if k > kpeak and abs(term) < stop:
                return float(total), float(abs(term)) + 2 * _EPS * abs(float(total))
            zk *= z
    raise AccuracyError(
        f"E_{{{alpha},{beta}}}({-x}) series did not converge in {_MAX_TERMS} terms",
        achieved_bound=float(abs(term)),
    )


def _asymptotic(alpha, beta, x, tol, kcap=600):
    """Optimally truncated asymptotic expansion at ``z = -x``; vectorized.

    Returns value, bound and a mask of arguments where the bound meets ``tol``.
    """
    k = np.arange(1, kcap + 1, dtype=float)
    y = beta - alpha * k
    # |1/Gamma(y)| <= Gamma(1 - y) / pi for y < 1 (reflection formula)
    log_rg = np.where(y < 1, gammaln(np.maximum(1 - y, 1e-300)) - math.log(math.pi),
                      -gammaln(np.maximum(y, 1e-300)))
    logx = np.log(x)[:, None]
    log_env = log_rg[None, :] - k[None, :] * logx
    below = log_env < math.log(tol * 1e-3)
    first_below = np.where(below.any(axis=1), below.argmax(axis=1), kcap)
    kstar = np.where(below.any(axis=1), first_below, log_env.argmin(axis=1))
    bound = np.exp(log_env[np.arange(x.size), np.minimum(kstar, kcap - 1)])
    # exact terms in log space; rgamma vanishes at nonpositive integers
    pole = rgamma(y) == 0
    sign = np.where(pole, 0.0, np.where(k % 2 == 0, 1.0, -1.0) * gammasgn(np.where(pole, 0.5, y)))
    keep = k[None, :] < (kstar[:, None] + 1)  # terms 1..kstar; term kstar+1 is omitted
    logc = np.where(keep, -gammaln(y)[None, :] - k[None, :] * logx, -np.inf)
    value = -(sign[None, :] * np.exp(logc)).sum(axis=1)
    return value, bound, bound <= tol


def _alpha_one(beta, z):
    if beta == 1:
        return math.exp(z)
    if beta == 2:
        return math.expm1(z) / z if z != 0 else 1.0
    return float(mpmath.hyp1f1(1, beta, z) * mpmath.rgamma(beta))


def _evaluate(alpha, beta, z, series_cutoff, tol):
    """Vectorized core returning (values, bounds, methods) for ``z <= 0``."""
    alpha = float(alpha)
    beta = float(beta)
    _check_params(alpha, beta, tol)
    z = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(z)) or np.any(z > 0):
        raise ValidationError("Mittag-Leffler arguments must be finite and <= 0")
    x = -z.ravel()
    value = np.empty_like(x)
    bound = np.zeros_like(x)
    method = np.empty(x.shape, dtype=object)

    zero = x == 0
    value[zero] = float(rgamma(beta))
    method[zero] = "zero"

    todo = ~zero
    if alpha == 1.0:
        for i in np.flatnonzero(todo):
            value[i] = _alpha_one(beta, -x[i])
            bound[i] = 4 * _EPS * abs(value[i])
        method[todo] = "closed-form"
        return value.reshape(z.shape), bound.reshape(z.shape), method.reshape(z.shape)

    mp_idx = []
    far = todo & (x > series_cutoff)
    if far.any():
        v, b, ok = _asymptotic(alpha, beta, x[far], tol)
        idx = np.flatnonzero(far)
        value[idx[ok]] = v[ok]
        bound[idx[ok]] = b[ok]
        method[idx[ok]] = "asymptotic"
        mp_idx.extend(idx[~ok])

    near = np.flatnonzero(todo & (x <= series_cutoff))
    if near.size:
        lmax = np.array([_series_log_max(alpha, beta, xi) for xi in x[near]])
        safe = lmax + math.log(16 * _EPS) <= math.log(tol)
        if safe.any():
            v, b = _series_float(alpha, beta, x[near[safe]])
            # a broad peak (small alpha) can sum to more rounding than the largest term suggests
            ok = b <= tol
            idx = near[safe][ok]
            value[idx] = v[ok]
            bound[idx] = b[ok]
            method[idx] = "series"
            safe[np.flatnonzero(safe)[~ok]] = False
        hard = near[~safe]
        if hard.size:
            # small alpha makes the series hopeless while the expansion
            # already converges below the cutoff
            v, b, ok = _asymptotic(alpha, beta, x[hard], tol)
            value[hard[ok]] = v[ok]
            bound[hard[ok]] = b[ok]
            method[hard[ok]] = "asymptotic"
            mp_idx.extend(hard[~ok])

    for i in mp_idx:
        value[i], bound[i] = _series_mp(alpha, beta, float(x[i]), tol)
        method[i] = "series-mp"

    if np.any(bound > tol * 10):
        worst = float(bound.max())
        raise AccuracyError(
            f"E_{{{alpha},{beta}}} reached error bound {worst:.3g} > tol={tol:.3g}",
            achieved_bound=worst,
        )
    return value.reshape(z.shape), bound.reshape(z.shape), method.reshape(z.shape)


def ml_eval(alpha, beta, z, *, series_cutoff=5.0, tol=1e-12):
    """Scalar evaluation returning the value, an error bound and the route used."""
    v, b, m = _evaluate(alpha, beta, np.array([z]), series_cutoff, tol)
    return MLResult(float(v[0]), float(b[0]), str(m[0]))


def ml(alpha, beta, z, *, series_cutoff=5.0, tol=1e-12):
    """Two-parameter Mittag-Leffler function ``E_{alpha,beta}(z)`` for ``z <= 0``.

    Accepts scalars or arrays; raises :class:`AccuracyError` if ``tol`` cannot
    be met at some argument.
    """
    v, _, _ = _evaluate(alpha, beta, z, series_cutoff, tol)
    return float(v) if np.ndim(v) == 0 else v


def s_kernel(nu, t, lam, **kw):
    """Per-mode multiplier of ``S_nu(t)``: ``E_nu(-lam t^nu)``."""
    t, lam = np.broadcast_arrays(np.asarray(t, float), np.asarray(lam, float))
    if np.any(t < 0) or np.any(lam <= 0):
        raise ValidationError("need t >= 0 and lam > 0")
    return ml(nu, 1.0, -lam * t**nu, **kw)


def k_kernel(nu, t, lam, **kw):
    """Per-mode multiplier of ``K_nu(t)``: ``E_{nu,nu}(-lam t^nu)``."""
    t, lam = np.broadcast_arrays(np.asarray(t, float), np.asarray(lam, float))
    if np.any(t < 0) or np.any(lam <= 0):
        raise ValidationError("need t >= 0 and lam > 0")
    return ml(nu, nu, -lam * t**nu, **kw)


# Wright-type densities -------------------------------------------------------


def _psi_log_terms(nu, theta, n):
    return gammaln(n * nu + 1) - gammaln(n + 1) - (nu * n + 1) * math.log(theta) - math.log(math.pi)


def wright_psi(nu, theta, n_terms=5000, tol=1e-13):
    """One-sided stable density ``psi_nu`` by its convergent series in ``1/theta``.

    ``psi(t) = (1/pi) sum_{n>=1} (-1)^(n-1) t^(-nu n - 1) Gamma(n nu + 1)/n! sin(n pi nu)``.
    Small ``theta`` makes the terms grow before they decay; the sum then runs
    in extended precision. Far in the left tail, where the density is below
    ``1e-10 tol``, the leading asymptotic term is returned instead. Raises
    :class:`AccuracyError` if ``n_terms`` terms do not reach the tail tolerance.
    """
    nu = float(nu)
    theta = float(theta)
    if not 0 < nu < 1:
        raise ValidationError(f"nu must lie in (0, 1), got {nu}")
    if not theta > 0:
        raise ValidationError(f"theta must be positive, got {theta}")
    log_tail = math.log(nu) - (1 + nu) * math.log(theta) + _mwright_tail_log(nu, theta ** (-nu))
    if theta < 1 and log_tail < math.log(tol) - 23.0:
        # deep left tail, far below tol: the leading asymptotic term is accurate to ~1e-2
        # relative, hence to ~1e-12 tol absolute
        return math.exp(max(log_tail, -745.0)) if log_tail > -745.0 else 0.0
    n = np.arange(1, n_terms + 1)
    logt = _psi_log_terms(nu, theta, n)
    past_peak = np.arange(n_terms) >= int(np.argmax(logt))
    small = past_peak & (logt < math.log(tol * 1e-3))
    if not small.any():
        raise AccuracyError(
            f"psi_{nu}({theta}) series has not converged after {n_terms} terms",
            achieved_bound=float(np.exp(logt[-1])),
        )
    nstop = int(np.argmax(small)) + 1
    lmax = float(logt[:nstop].max())
    if lmax + math.log(16 * _EPS) <= math.log(tol):
        k = n[:nstop]
        signs = np.where(k % 2 == 1, 1.0, -1.0)
        return float(np.sum(signs * np.exp(logt[:nstop]) * np.sin(k * math.pi * nu)))
    return _psi_mp(nu, theta, nstop, lmax, tol)


def _mwright_tail_log(nu, x):
    """Log of the leading large-``x`` term of the M-Wright function ``M_nu(x)``.

    ``M_nu(x) ~ A x^((nu - 1/2)/(1 - nu)) exp(-b x^(1/(1 - nu)))`` with
    ``A = (2 pi (1 - nu))^(-1/2) nu^((2 nu - 1)/(2 (1 - nu)))`` and
    ``b = (1 - nu) nu^(nu/(1 - nu))``.
    """
    c = 1.0 - nu
    logA = -0.5 * math.log(2 * math.pi * c) + (2 * nu - 1) / (2 * c) * math.log(nu)
    b = c * nu ** (nu / c)
    return logA + (nu - 0.5) / c * math.log(x) - b * x ** (1 / c)


@lru_cache(maxsize=100_000)
def _psi_mp(nu, theta, nstop, lmax, tol):
    dps = int(lmax / math.log(10)) + int(-math.log10(tol)) + 12
    if dps > _MAX_DPS:
        raise AccuracyError(f"psi_{nu}({theta}) needs {dps} digits", achieved_bound=math.inf)
    with mpmath.workdps(dps):
        v = mpmath.mpf(nu)
        th = mpmath.mpf(theta)
        total = mpmath.mpf(0)
        for k in range(1, nstop + 1):
            term = (mpmath.gamma(k * v + 1) / mpmath.factorial(k)) * th ** (-v * k - 1) \
                * mpmath.sin(k * mpmath.pi * v)
            total += term if k % 2 == 1 else -term
        return float(total / mpmath.pi)


def phi_density(nu, theta, **kw):
    """``phi_nu(t) = (1/nu) t^(-1-1/nu) psi_nu(t^(-1/nu))``.

    Its Laplace transform is ``E_nu(-s)`` and its moments are
    ``Gamma(1 + L) / Gamma(1 + nu L)``.
    """
    nu = float(nu)
    theta = float(theta)
    if not theta > 0:
        raise ValidationError(f"theta must be positive, got {theta}")
    return theta ** (-1 - 1 / nu) * wright_psi(nu, theta ** (-1 / nu), **kw) / nu
