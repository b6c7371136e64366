"""Univariate linear SDE likelihood pieces.

The transformed process ``Y = phi(X)`` follows
``dY = (beta0 + beta1 Y) dt + sigma_p dW``, observed with measurement error
``N(0, sigma_m**2)`` and a possibly random start ``N(y0, sigma_0**2)``.
Conditional residuals between consecutive observations have a tridiagonal
covariance ``sigma**2 C`` under the split ``sigma_m**2 = eta sigma**2``,
``sigma_p**2 = (1 - eta) sigma**2``, ``sigma_0**2 = eta0 sigma**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import exprel

from .gaussml import (
    LOG_2PI,
    TridiagonalCovariance,
    UVector,
    logdet_and_solve,
    log_likelihood_at_optimum,
)
from .transforms import TransformFamily, get_transform

__all__ = [
    "BETA1_ZERO",
    "SdeParams",
    "Multipliers",
    "ConditionalResiduals",
    "FinalStats",
    "TimeOrderError",
    "growth_factor",
    "conditional_residuals",
    "covariance_entries",
    "sort_observations",
    "uvector",
    "final_stats",
    "mean_trajectory",
    "direct_negloglik",
]

# |beta1| below this selects the beta1 = 0 formulas.
BETA1_ZERO = 1e-12


class TimeOrderError(ValueError):
    """Observation times are duplicated or not after the initial time."""


@dataclass(frozen=True)
class SdeParams:
    beta0: float
    beta1: float
    eta: float = 0.0
    eta0: float = 0.0
    x0: float = 0.0
    t0: float = 0.0
    transform_params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.eta0 < 0.0:
            raise ValueError(f"eta0 must be non-negative, got {self.eta0}")


@dataclass(frozen=True)
class Multipliers:
    """Per-unit multipliers of the measurement, initial and process sigmas."""

    mu_m: float = 1.0
    mu_0: float = 1.0
    mu_p: float = 1.0


@dataclass(frozen=True)
class ConditionalResiduals:
    z: np.ndarray
    dt: np.ndarray


@dataclass(frozen=True)
class FinalStats:
    sigma_p: float
    sigma_m: float
    sigma_0: float
    sigma2: float
    log_likelihood: float
    rss: float
    n: int

    def as_dict(self) -> dict:
        return {
            "sigma_p": self.sigma_p,
            "sigma_m": self.sigma_m,
            "sigma_0": self.sigma_0,
            "sigma2": self.sigma2,
            "log_likelihood": self.log_likelihood,
            "rss": self.rss,
            "n": self.n,
        }


def growth_factor(beta1, dt):
    """``(exp(beta1 dt) - 1) / beta1``, equal to ``dt`` in the limit ``beta1 -> 0``."""
    dt = np.asarray(dt, dtype=float)
    return dt * exprel(beta1 * dt)


def sort_observations(x, t, t0: float) -> tuple[np.ndarray, np.ndarray]:
    """Stable sort by time; reject duplicate times and times not after ``t0``."""
    x = np.asarray(x, dtype=float).ravel()
    t = np.asarray(t, dtype=float).ravel()
    if x.size != t.size:
        raise ValueError("x and t must have the same length")
    if x.size == 0:
        raise ValueError("at least one observation is required")
    order = np.argsort(t, kind="stable")
    x, t = x[order], t[order]
    if np.any(np.diff(t) <= 0):
        raise TimeOrderError("duplicate observation times")
    if not t[0] > t0:
        raise TimeOrderError(f"first observation time {t[0]} is not after t0={t0}")
    return x, t


def conditional_residuals(y, t, params: SdeParams, y0: float) -> ConditionalResiduals:
    """Residuals of each transformed observation given the previous one.

    ``y`` and ``t`` must already be sorted; ``y0`` is the transformed initial
    value.  Written as ``y_i - e^{b1 d} y_{i-1} - b0 (e^{b1 d} - 1)/b1`` so the
    ``beta1 -> 0`` limit is reached smoothly.
    """
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    dt = np.diff(np.concatenate(([params.t0], t)))
    if np.any(dt <= 0):
        raise TimeOrderError("times must be strictly increasing and after t0")
    prev = np.concatenate(([y0], y[:-1]))
    b1 = params.beta1
    if abs(b1) < BETA1_ZERO:
        z = y - prev - params.beta0 * dt
    else:
        z = y - np.exp(b1 * dt) * prev - params.beta0 * growth_factor(b1, dt)
    return ConditionalResiduals(z=z, dt=dt)


def covariance_entries(dt, params: SdeParams,
                       multipliers: Multipliers = Multipliers()) -> TridiagonalCovariance:
    """Tridiagonal ``C`` of the conditional residuals, in units of ``sigma**2``."""
    dt = np.asarray(dt, dtype=float)
    m2 = multipliers.mu_m**2 * params.eta
    z2 = multipliers.mu_0**2 * params.eta0
    p2 = multipliers.mu_p**2 * (1.0 - params.eta)
    b1 = params.beta1
    if abs(b1) < BETA1_ZERO:
        ex = np.ones_like(dt)
        var_inc = dt
    else:
        ex = np.exp(b1 * dt)
        var_inc = growth_factor(2.0 * b1, dt)
    ex2 = ex * ex
    cdiag = (ex2 + 1.0) * m2 + p2 * var_inc
    cdiag[0] = ex2[0] * z2 + m2 + p2 * var_inc[0]
    csub = -ex * m2
    csub[0] = 0.0
    return TridiagonalCovariance(cdiag, csub)


def _unit_pieces(x, t, params: SdeParams, transform: TransformFamily,
                 multipliers: Multipliers, presorted: bool = False):
    """Return ``v = L^{-1} z`` and ``log J`` for one unit."""
    if not presorted:
        x, t = sort_observations(x, t, params.t0)
    tp = params.transform_params
    y = transform(x, tp)
    y0 = float(transform(params.x0, tp))
    res = conditional_residuals(y, t, params, y0)
    cov = covariance_entries(res.dt, params, multipliers)
    logdet, v = logdet_and_solve(cov.cdiag, cov.csub, res.z)
    log_j = transform.log_abs_jacobian(x, tp) - logdet
    return v, log_j


def final_stats(u: UVector, eta: float, eta0: float) -> FinalStats:
    rss = u.rss
    sigma2 = u.jacobian_root**2 * rss / u.n
    return FinalStats(
        sigma_p=math.sqrt((1.0 - eta) * sigma2),
        sigma_m=math.sqrt(eta * sigma2),
        sigma_0=math.sqrt(eta0 * sigma2),
        sigma2=sigma2,
        log_likelihood=log_likelihood_at_optimum(u),
        rss=rss,
        n=u.n,
    )


def uvector(x, t, params: SdeParams, transform: TransformFamily | str,
            final: bool = False, multipliers: Multipliers = Multipliers()):
    """u-vector of a single unit, or the sigma estimates and log-likelihood.

    Parameters
    ----------
    x, t : array_like
        Observations on the original scale and their times (any order).
    params : SdeParams
    transform : TransformFamily or str
    final : bool
        If true, return :class:`FinalStats` evaluated at ``params``, which
        should be the minimiser of ``sum(u**2)``.
    """
    transform = get_transform(transform)
    v, log_j = _unit_pieces(x, t, params, transform, multipliers)
    u = UVector(u=v / math.exp(log_j / v.size), log_jacobian=log_j)
    if not final:
        return u
    return final_stats(u, params.eta, params.eta0)


def mean_trajectory(t, params: SdeParams, transform: TransformFamily | str | None = None):
    """Noise-free solution from ``(t0, x0)``; on the original scale if a transform is given."""
    t = np.asarray(t, dtype=float)
    transform = get_transform(transform or "identity")
    tp = params.transform_params
    y0 = float(transform(params.x0, tp))
    tau = t - params.t0
    y = y0 * np.exp(params.beta1 * tau) + params.beta0 * growth_factor(params.beta1, tau)
    return transform.inv(y, tp)


def direct_negloglik(x, t, beta0: float, beta1: float, sigma_p: float, sigma_m: float,
                     sigma_0: float, x0: float, t0: float,
                     transform: TransformFamily | str,
                     transform_params: Mapping[str, float] | None = None,
                     mu_p: float = 1.0) -> float:
    """Exact negative log-likelihood from a dense covariance of the residuals.

    Uses absolute standard deviations and a generic dense factorisation, so it
    is independent of the banded least-squares path.
    """
    transform = get_transform(transform)
    tp = transform_params or {}
    x, t = sort_observations(x, t, t0)
    y = transform(x, tp)
    y0 = float(transform(x0, tp))
    dt = np.diff(np.concatenate(([t0], t)))
    n = y.size
    prev = np.concatenate(([y0], y[:-1]))
    if beta1 == 0.0:
        ex = np.ones(n)
        z = y - prev - beta0 * dt
        var_d = (mu_p * sigma_p) ** 2 * dt
    else:
        ex = np.exp(beta1 * dt)
        z = y + beta0 / beta1 - ex * (prev + beta0 / beta1)
        var_d = (mu_p * sigma_p) ** 2 * (np.exp(2.0 * beta1 * dt) - 1.0) / (2.0 * beta1)
    cov = np.diag(ex**2 * sigma_m**2 + sigma_m**2 + var_d)
    cov[0, 0] = ex[0] ** 2 * sigma_0**2 + sigma_m**2 + var_d[0]
    for i in range(1, n):
        cov[i, i - 1] = cov[i - 1, i] = -ex[i] * sigma_m**2
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        return math.inf
    quad = float(z @ np.linalg.solve(cov, z))
    log_j = float(np.sum(np.log(np.abs(transform.deriv(x, tp)))))
    return 0.5 * (n * LOG_2PI + logdet + quad) - log_j
