"""Transformed-Gaussian maximum likelihood as a sum of squares.

For observations whose transformation ``z = phi(y, theta)`` is Gaussian with
covariance ``sigma**2 * C``, the ML estimate of ``theta`` minimises
``sum(u**2)`` with ``u = L^{-1} eps / J**(1/n)``, where ``C = L L'`` and ``J``
is the absolute Jacobian determinant of ``y -> L^{-1} phi(y)``.  The scale
``sigma**2`` is profiled out and recovered afterwards.

Determinants are handled on the log scale throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "NotPositiveDefiniteError",
    "PriorSupportError",
    "TridiagonalCovariance",
    "UVector",
    "PriorDensity",
    "logdet_and_solve",
    "u_from_residuals",
    "diagonal_jacobian_geomean",
    "sigma2_hat",
    "log_likelihood_at_optimum",
    "map_weighted_residuals",
    "beta_prior",
    "uniform_prior",
]

LOG_2PI = math.log(2.0 * math.pi)


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """A covariance pivot was not positive."""


class PriorSupportError(ValueError):
    """The prior density is zero at the requested parameters."""


@dataclass(frozen=True)
class TridiagonalCovariance:
    """Symmetric tridiagonal matrix stored as diagonal and sub-diagonal.

    ``csub[i]`` holds ``C[i, i-1]``; ``csub[0]`` is ignored.
    """

    cdiag: np.ndarray
    csub: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cdiag", np.asarray(self.cdiag, dtype=float))
        object.__setattr__(self, "csub", np.asarray(self.csub, dtype=float))
        if self.cdiag.shape != self.csub.shape or self.cdiag.ndim != 1:
            raise ValueError("cdiag and csub must be 1-d arrays of equal length")

    @property
    def n(self) -> int:
        return self.cdiag.size

    def dense(self) -> np.ndarray:
        c = np.diag(self.cdiag)
        if self.n > 1:
            idx = np.arange(1, self.n)
            c[idx, idx - 1] = self.csub[1:]
            c[idx - 1, idx] = self.csub[1:]
        return c


def logdet_and_solve(cdiag, csub, z) -> tuple[float, np.ndarray]:
    """Return ``log|L|`` and ``v = L^{-1} z`` for the tridiagonal ``C = L L'``.

    ``L`` is lower bidiagonal; factorisation and forward substitution are
    done in the same O(n) sweep.

    Raises
    ------
    NotPositiveDefiniteError
        If a pivot ``c[i, i] - l[i, i-1]**2`` is not positive.
    """
    cdiag = np.asarray(cdiag, dtype=float)
    csub = np.asarray(csub, dtype=float)
    z = np.asarray(z, dtype=float)
    n = z.size
    if n == 0 or cdiag.size != n or csub.size != n:
        raise ValueError("cdiag, csub and z must have the same positive length")

    if n == 1 or not np.any(csub[1:]):
        if np.any(cdiag <= 0) or not np.all(np.isfinite(cdiag)):
            raise NotPositiveDefiniteError("non-positive diagonal in covariance")
        ldiag = np.sqrt(cdiag)
        return float(np.sum(np.log(ldiag))), z / ldiag

    v = np.empty(n)
    if not cdiag[0] > 0:
        raise NotPositiveDefiniteError("pivot 0 is not positive")
    ldiag = math.sqrt(cdiag[0])
    logdet = math.log(ldiag)
    v[0] = z[0] / ldiag
    for i in range(1, n):
        lsub = csub[i] / ldiag
        pivot = cdiag[i] - lsub * lsub
        if not pivot > 0:
            raise NotPositiveDefiniteError(f"pivot {i} is not positive")
        ldiag = math.sqrt(pivot)
        logdet += math.log(ldiag)
        v[i] = (z[i] - lsub * v[i - 1]) / ldiag
    return logdet, v


@dataclass(frozen=True)
class UVector:
    """Scaled residuals whose sum of squares is minimised.

    ``log_jacobian`` is ``log J`` of the full transformation, already
    including the ``-log|L|`` whitening term.
    """

    u: np.ndarray
    log_jacobian: float

    @property
    def n(self) -> int:
        return int(self.u.size)

    @property
    def rss(self) -> float:
        return math.fsum(self.u * self.u)

    @property
    def jacobian_root(self) -> float:
        """``J**(1/n)``."""
        return math.exp(self.log_jacobian / self.n)


def u_from_residuals(epsilon, log_jacobian_phi: float,
                     covariance: TridiagonalCovariance | None = None) -> UVector:
    """Whiten ``epsilon`` with ``covariance`` and divide by ``J**(1/n)``."""
    epsilon = np.asarray(epsilon, dtype=float)
    if covariance is None:
        logdet, v = 0.0, epsilon
    else:
        logdet, v = logdet_and_solve(covariance.cdiag, covariance.csub, epsilon)
    log_j = float(log_jacobian_phi) - logdet
    return UVector(u=v / math.exp(log_j / epsilon.size), log_jacobian=log_j)


def diagonal_jacobian_geomean(y, lam: float) -> float:
    """``J**(1/n)`` of an elementwise Box-Cox transform: ``gm(y)**(lam - 1)``."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("geometric mean requires positive values")
    return math.exp((lam - 1.0) * float(np.mean(np.log(y))))


def sigma2_hat(u: UVector, n_params: int = 0) -> tuple[float, float]:
    """ML estimate of ``sigma**2`` and ``sigma`` from the optimal u-vector.

    ``n_params > 0`` gives the ``n - p`` denominator variant, reported for
    reference only.
    """
    denom = u.n - n_params
    if denom <= 0:
        raise ValueError("not enough observations for the requested denominator")
    s2 = math.exp(2.0 * u.log_jacobian / u.n) * u.rss / denom
    return s2, math.sqrt(s2)


def log_likelihood_at_optimum(u: UVector) -> float:
    """Profile log-likelihood; ``+inf`` for an exact fit (zero RSS)."""
    n = u.n
    if u.rss == 0.0:
        return math.inf
    return -(n / 2.0) * (math.log(u.rss / n) + LOG_2PI + 1.0)


@dataclass(frozen=True)
class PriorDensity:
    """Prior on named parameters, given by its log density."""

    name: str
    log_density: Callable[[Mapping[str, float]], float]

    def __call__(self, theta: Mapping[str, float]) -> float:
        return float(self.log_density(theta))


def map_weighted_residuals(epsilon, prior: PriorDensity, theta: Mapping[str, float]) -> np.ndarray:
    """Divide residuals by ``p(theta)**(1/n)`` so that least squares gives MAP."""
    epsilon = np.asarray(epsilon, dtype=float)
    logp = prior(theta)
    if not np.isfinite(logp):
        raise PriorSupportError(f"prior {prior.name!r} has zero density at {dict(theta)}")
    return epsilon * math.exp(-logp / epsilon.size)


def beta_prior(param: str, alpha: float, beta: float,
               lower: float = 0.0, upper: float = 1.0) -> PriorDensity:
    """Beta(alpha, beta) prior on ``param`` rescaled to ``[lower, upper]``."""
    width = upper - lower
    log_norm = (math.lgamma(alpha + beta) - math.lgamma(alpha) - math.lgamma(beta)
                - math.log(width))

    def logpdf(theta):
        x = (theta[param] - lower) / width
        if not 0.0 < x < 1.0:
            if (x == 0.0 and alpha == 1.0) or (x == 1.0 and beta == 1.0):
                return log_norm
            return -math.inf
        return log_norm + (alpha - 1.0) * math.log(x) + (beta - 1.0) * math.log1p(-x)

    return PriorDensity(f"beta({alpha}, {beta}) on {param}", logpdf)


def uniform_prior(log_value: float = 0.0) -> PriorDensity:
    return PriorDensity("uniform", lambda theta: log_value)
