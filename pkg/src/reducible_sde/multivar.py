"""Likelihood pieces for multivariate linear SDEs.

System: ``dY = (A Y + b) dt + S dW`` observed as ``y_i = Y(t_i) + eps_i`` with
``eps_i ~ N(0, V)`` and ``Y(t0) = y0 + eps_0``, ``eps_0 ~ N(0, V0)``.  The
conditional residuals ``z_i = y_i + A^{-1} b - e^{A d_i}(y_{i-1} + A^{-1} b)``
have a block-tridiagonal covariance that is whitened by a block-bidiagonal
Cholesky sweep, exactly as in the scalar case.

Covariances ``S S'``, ``V`` and ``V0`` are taken in units of ``sigma**2``
when the result feeds the u-vector; on their own the functions are
scale-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import cho_factor, expm, solve_triangular

from .gaussml import NotPositiveDefiniteError, UVector

__all__ = [
    "LyapunovSingularError",
    "SingularDriftError",
    "LinearSdeSystem",
    "BlockResiduals",
    "EigenDrift",
    "PowerProductTransform",
    "matrix_exponential",
    "transition_covariance",
    "transition_covariance_quadrature",
    "lyapunov_residual",
    "multivariate_conditional_residuals",
    "block_logdet_and_solve",
    "multivariate_uvector",
]

# Relative size below which an eigenvalue sum makes the Lyapunov operator singular.
LYAPUNOV_TOL = 1e-12


class LyapunovSingularError(np.linalg.LinAlgError):
    """``A (+) A`` is singular; use :func:`transition_covariance_quadrature`."""


class SingularDriftError(np.linalg.LinAlgError):
    """``A`` is singular but the offset ``b`` is not zero."""


def _square(M, name="matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def matrix_exponential(M) -> np.ndarray:
    """``e^M`` by Pade scaling and squaring (scipy); raises on overflow."""
    M = _square(M, "M")
    with np.errstate(over="raise", invalid="raise"):
        try:
            out = expm(M)
        except FloatingPointError as exc:
            raise OverflowError("matrix exponential overflows") from exc
    if not np.all(np.isfinite(out)):
        raise OverflowError("matrix exponential overflows")
    return out


def _lyapunov_operator(A) -> np.ndarray:
    p = A.shape[0]
    eye = np.eye(p)
    # vec(A X + X A') = (I kron A + A kron I) vec(X), column-major vec.
    return np.kron(eye, A) + np.kron(A, eye)


def _check_lyapunov(A) -> None:
    lam = np.linalg.eigvals(A)
    sums = np.abs(lam[:, None] + lam[None, :])
    scale = max(1.0, float(np.max(np.abs(lam))))
    if np.min(sums) <= LYAPUNOV_TOL * scale:
        raise LyapunovSingularError(
            "A has eigenvalues summing to zero; use transition_covariance_quadrature")


def transition_covariance(A, S, dt: float) -> np.ndarray:
    """Covariance of the transition noise over ``dt``.

    Solves ``A X + X A' = e^{A dt} S S' e^{A' dt} - S S'`` by a Kronecker
    linear system and symmetrises the result.
    """
    A = _square(A, "A")
    S = np.asarray(S, dtype=float)
    if not dt > 0:
        raise ValueError("dt must be positive")
    _check_lyapunov(A)
    Q = S @ S.T
    E = matrix_exponential(A * dt)
    rhs = E @ Q @ E.T - Q
    p = A.shape[0]
    x = np.linalg.solve(_lyapunov_operator(A), rhs.reshape(-1, order="F"))
    X = x.reshape((p, p), order="F")
    return 0.5 * (X + X.T)


def transition_covariance_quadrature(A, S, dt: float, tol: float = 1e-13) -> np.ndarray:
    """``integral_0^dt e^{A s} S S' e^{A' s} ds`` by adaptive quadrature.

    Works for any ``A``; used as the oracle for :func:`transition_covariance`
    and as its fallback when the Lyapunov operator is singular.
    """
    A = _square(A, "A")
    S = np.asarray(S, dtype=float)
    Q = S @ S.T

    def integrand(s):
        E = matrix_exponential(A * s)
        return E @ Q @ E.T

    X, _ = quad_vec(integrand, 0.0, float(dt), epsabs=tol, epsrel=tol)
    return 0.5 * (X + X.T)


def lyapunov_residual(A, X, rhs) -> float:
    """``max |A X + X A' - rhs|``."""
    return float(np.max(np.abs(A @ X + X @ A.T - rhs)))


@dataclass
class LinearSdeSystem:
    """Parameters of a time-invariant multivariate linear SDE with noise.

    ``S`` must be lower triangular (only ``S S'`` is identified).  ``V`` and
    ``V0`` default to zero.
    """

    A: np.ndarray
    b: np.ndarray
    S: np.ndarray
    V: np.ndarray | None = None
    V0: np.ndarray | None = None
    y0: np.ndarray | None = None
    t0: float = 0.0

    def __post_init__(self):
        self.A = _square(self.A, "A")
        p = self.A.shape[0]
        self.b = np.asarray(self.b, dtype=float).reshape(p)
        self.S = np.asarray(self.S, dtype=float).reshape(p, p)
        if np.any(np.triu(self.S, 1)):
            raise ValueError("S must be lower triangular")
        self.V = np.zeros((p, p)) if self.V is None else np.asarray(self.V, dtype=float).reshape(p, p)
        self.V0 = np.zeros((p, p)) if self.V0 is None else np.asarray(self.V0, dtype=float).reshape(p, p)
        self.y0 = np.zeros(p) if self.y0 is None else np.asarray(self.y0, dtype=float).reshape(p)
        for name in ("V", "V0"):
            M = getattr(self, name)
            if not np.allclose(M, M.T, rtol=0, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")

    @property
    def p(self) -> int:
        return self.A.shape[0]

    def equilibrium_offset(self) -> np.ndarray:
        """``A^{-1} b`` (zero when ``b`` is zero)."""
        if not np.any(self.b):
            return np.zeros(self.p)
        try:
            if np.linalg.cond(self.A) > 1.0 / np.finfo(float).eps:
                raise np.linalg.LinAlgError
            return np.linalg.solve(self.A, self.b)
        except np.linalg.LinAlgError:
            raise SingularDriftError("A is singular and b is not zero") from None


@dataclass
class BlockResiduals:
    """``z`` (n x p), diagonal blocks ``Var[z_i]`` and ``Cov[z_i, z_{i-1}]``."""

    z: np.ndarray
    diag: np.ndarray
    sub: np.ndarray
    dt: np.ndarray = field(default_factory=lambda: np.empty(0))


def multivariate_conditional_residuals(Y, times, system: LinearSdeSystem) -> BlockResiduals:
    """Conditional residuals and their block-tridiagonal covariance.

    ``Y`` is ``n x p`` on the linear (transformed) scale, rows ordered by
    ``times``, which must be strictly increasing and after ``system.t0``.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    t = np.asarray(times, dtype=float).ravel()
    p = system.p
    if Y.shape != (t.size, p):
        raise ValueError(f"Y must have shape ({t.size}, {p}), got {Y.shape}")
    dt = np.diff(np.concatenate(([system.t0], t)))
    if np.any(dt <= 0):
        raise ValueError("times must be strictly increasing and after t0")
    off = system.equilibrium_offset()
    n = t.size
    z = np.empty((n, p))
    diag = np.empty((n, p, p))
    sub = np.zeros((n, p, p))
    prev = system.y0
    cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}
    for i in range(n):
        key = float(dt[i])
        if key not in cache:
            cache[key] = (matrix_exponential(system.A * key),
                          transition_covariance(system.A, system.S, key))
        E, W = cache[key]
        z[i] = Y[i] + off - E @ (prev + off)
        carried = system.V0 if i == 0 else system.V
        diag[i] = system.V + E @ carried @ E.T + W
        if i > 0:
            sub[i] = -E @ system.V
        prev = Y[i]
    return BlockResiduals(z=z, diag=diag, sub=sub, dt=dt)


def block_logdet_and_solve(diag, sub, z) -> tuple[float, np.ndarray]:
    """``log|L|`` and ``L^{-1} z`` for a block-tridiagonal ``C = L L'``.

    ``sub[i]`` is ``C[i, i-1]``; ``sub[0]`` is ignored.  Returns ``v`` with
    the shape of ``z``.
    """
    diag = np.asarray(diag, dtype=float)
    sub = np.asarray(sub, dtype=float)
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    v = np.empty_like(z)
    logdet = 0.0
    L_prev = None
    for i in range(n):
        D = diag[i]
        rhs = z[i]
        if i > 0:
            # L[i, i-1] = C[i, i-1] L[i-1, i-1]^{-T}
            Lsub = solve_triangular(L_prev, sub[i].T, lower=True).T
            D = D - Lsub @ Lsub.T
            rhs = rhs - Lsub @ v[i - 1]
        try:
            c, _ = cho_factor(D, lower=True)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError(f"block {i} is not positive definite") from None
        L = np.tril(c)
        logdet += float(np.sum(np.log(np.diag(L))))
        v[i] = solve_triangular(L, rhs, lower=True)
        L_prev = L
    return logdet, v


def multivariate_uvector(Y, times, system: LinearSdeSystem,
                         log_jacobian_phi: float = 0.0) -> UVector:
    """u-vector of one multivariate series; ``n`` counts scalar observations."""
    res = multivariate_conditional_residuals(Y, times, system)
    logdet, v = block_logdet_and_solve(res.diag, res.sub, res.z)
    flat = v.ravel()
    log_j = float(log_jacobian_phi) - logdet
    return UVector(u=flat / math.exp(log_j / flat.size), log_jacobian=log_j)


class EigenDrift:
    """Drift ``A = P^{-1} diag(lam) P`` with real eigenvalues.

    The exponential and the transition covariance then have closed forms in
    the eigenbasis, which avoids the Kronecker solve.
    """

    def __init__(self, eigenvalues, P):
        self.eigenvalues = np.asarray(eigenvalues, dtype=float).ravel()
        self.P = _square(P, "P")
        if self.P.shape[0] != self.eigenvalues.size:
            raise ValueError("P and eigenvalues disagree in size")
        self.P_inv = np.linalg.inv(self.P)

    @property
    def matrix(self) -> np.ndarray:
        return self.P_inv @ np.diag(self.eigenvalues) @ self.P

    def expm(self, dt: float) -> np.ndarray:
        return self.P_inv @ np.diag(np.exp(self.eigenvalues * dt)) @ self.P

    def transition_covariance(self, S, dt: float) -> np.ndarray:
        S = np.asarray(S, dtype=float)
        Q = self.P @ S @ S.T @ self.P.T
        lsum = self.eigenvalues[:, None] + self.eigenvalues[None, :]
        # (e^{s dt} - 1) / s, with the s -> 0 limit dt
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(np.abs(lsum) < 1e-12, dt, np.expm1(lsum * dt) / lsum)
        X = self.P_inv @ (Q * g) @ self.P_inv.T
        return 0.5 * (X + X.T)


class PowerProductTransform:
    """``y = exp(C log x)``, i.e. ``y_k = prod_l x_l ** C[k, l]``, for positive vectors.

    The Jacobian of one observation is ``diag(y) C diag(1/x)``.
    """

    def __init__(self, C):
        self.C = _square(C, "C")
        sign, self._logdet_c = np.linalg.slogdet(self.C)
        if sign == 0:
            raise ValueError("C must be nonsingular")

    def __call__(self, X) -> np.ndarray:
        X = self._positive(X)
        return np.exp(np.log(X) @ self.C.T)

    def inverse(self, Y) -> np.ndarray:
        Y = self._positive(Y)
        return np.exp(np.linalg.solve(self.C, np.log(Y).T).T)

    def jacobian(self, x) -> np.ndarray:
        x = self._positive(x).ravel()
        y = self(x[None, :])[0]
        return (y[:, None] * self.C) / x[None, :]

    def log_abs_jacobian(self, X) -> float:
        """Sum over rows of ``log|det dy/dx|``."""
        X = np.atleast_2d(self._positive(X))
        logy = np.log(X) @ self.C.T
        return float(np.sum(logy) - np.sum(np.log(X)) + X.shape[0] * self._logdet_c)

    @staticmethod
    def _positive(X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if np.any(X <= 0):
            raise ValueError("power-product transform needs positive values")
        return X
