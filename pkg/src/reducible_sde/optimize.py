"""Bounded nonlinear least squares, a direct likelihood oracle, and AIC/BIC.

Bounds are handled by a smooth change of variables: the solver works on an
unconstrained internal vector ``s`` and the residual function sees
``theta = g(s)``.  Two-sided bounds use the logistic map
``lo + (hi - lo) / (1 + exp(-s))`` and one-sided bounds ``lo + exp(s)``.
An optimum on a bound is approached as ``s`` runs off to infinity; there the
Gauss-Newton steps in ``s`` grow as the sensitivity shrinks, so the bound is
reached to within ``AT_BOUND_TOL`` in a few iterations.  (Maps that reach the
bound at a finite ``s``, like ``sin``, make the Jacobian column vanish while
the residuals do not, and LM then crawls.)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

__all__ = [
    "FitProblem",
    "FitResult",
    "InfeasibleStartError",
    "BoundTransform",
    "fit_least_squares",
    "fit_direct_nll",
    "information_criteria",
]

logger = logging.getLogger(__name__)

AT_BOUND_TOL = 1e-6
# Fraction of the bounded range by which a start on a bound is moved inside.
START_NUDGE = 1e-4
# Largest move of a bounded parameter per iteration, in internal units: a
# factor of about e**2 closer to its bound.
MAX_BOUNDED_STEP = 2.0
# Inward moves (fractions of the bounded range) tried when releasing a
# parameter stuck on a bound, and the relative RSS gain that justifies it.
RELEASE_FRACTIONS = (1e-2, 1e-3, 1e-4, 1e-5)
RELEASE_GAIN = 1e-9
MAX_RELEASES = 5
INFEASIBLE = (ValueError, ArithmeticError, np.linalg.LinAlgError)


class InfeasibleStartError(ValueError):
    """The residual function cannot be evaluated at the start point."""


class BoundTransform:
    """Elementwise map between internal unconstrained and bounded parameters."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper must have the same shape")
        if np.any(self.lower >= self.upper):
            raise ValueError("each lower bound must be below its upper bound")
        self.lo_fin = np.isfinite(self.lower)
        self.hi_fin = np.isfinite(self.upper)
        self.both = self.lo_fin & self.hi_fin
        self.lo_only = self.lo_fin & ~self.hi_fin
        self.hi_only = self.hi_fin & ~self.lo_fin

    def to_external(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        th = s.copy()
        lo, hi = self.lower, self.upper
        b = self.both
        th[b] = lo[b] + (hi[b] - lo[b]) * expit(s[b])
        b = self.lo_only
        th[b] = lo[b] + np.exp(s[b])
        b = self.hi_only
        th[b] = hi[b] - np.exp(s[b])
        return th

    def to_internal(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        if np.any(th < self.lower) or np.any(th > self.upper):
            raise InfeasibleStartError("start values outside bounds")
        th = self.clip_inside(th)
        s = th.copy()
        lo, hi = self.lower, self.upper
        b = self.both
        s[b] = logit((th[b] - lo[b]) / (hi[b] - lo[b]))
        b = self.lo_only
        s[b] = np.log(th[b] - lo[b])
        b = self.hi_only
        s[b] = np.log(hi[b] - th[b])
        return s

    def clip_inside(self, theta) -> np.ndarray:
        """Move values sitting on a bound slightly inside (it maps to infinity)."""
        th = np.array(theta, dtype=float)
        width = np.where(self.both, self.upper - self.lower, 1.0)
        eps = START_NUDGE * width
        lo_hit = self.lo_fin & (th - self.lower < eps)
        hi_hit = self.hi_fin & (self.upper - th < eps)
        th[lo_hit] = self.lower[lo_hit] + eps[lo_hit]
        th[hi_hit] = self.upper[hi_hit] - eps[hi_hit]
        return th

    def at_bound(self, theta, tol: float = AT_BOUND_TOL) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        return ((self.lo_fin & (np.abs(th - self.lower) <= tol))
                | (self.hi_fin & (np.abs(self.upper - th) <= tol)))


@dataclass
class FitProblem:
    """Least-squares problem ``min sum(residuals(theta)**2)`` within bounds."""

    residuals: Callable[[np.ndarray], np.ndarray]
    start: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    names: Sequence[str] | None = None
    tol: float = 1e-10
    max_iter: int = 500

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float).ravel()
        k = self.start.size
        self.lower = np.full(k, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(k, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if self.names is None:
            self.names = [f"theta{i}" for i in range(k)]
        if len(self.names) != k or self.lower.size != k or self.upper.size != k:
            raise ValueError("start, bounds and names must have the same length")


@dataclass
class FitResult:
    """Outcome of a fit.

    The likelihood fields are filled in by the model layer; a bare
    least-squares fit leaves them as NaN.
    """

    theta: np.ndarray
    names: list[str]
    rss: float
    iterations: int
    converged: bool
    at_bound: np.ndarray
    message: str = ""
    n_obs: int = 0
    log_likelihood: float = math.nan
    sigma_p: float = math.nan
    sigma_m: float = math.nan
    sigma_0: float = math.nan
    sigma: float = math.nan
    df: int = 0
    aic: float = math.nan
    bic: float = math.nan
    history: list[float] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def named(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.theta)))

    def bound_flags(self) -> dict[str, bool]:
        return dict(zip(self.names, map(bool, self.at_bound)))


def _safe_residuals(func, theta, n_expected=None):
    try:
        r = np.asarray(func(theta), dtype=float).ravel()
    except INFEASIBLE as exc:
        logger.debug("infeasible point %s: %s", theta, exc)
        return None
    if not np.all(np.isfinite(r)) or (n_expected is not None and r.size != n_expected):
        return None
    return r


def _jacobian(f, s, r0):
    """Forward differences, falling back to backward ones at infeasible points."""
    J = np.empty((r0.size, s.size))
    for k in range(s.size):
        h = max(1e-7, 1e-7 * abs(s[k]))
        sp = s.copy()
        sp[k] += h
        r = f(sp)
        if r is None:
            sp[k] = s[k] - h
            r = f(sp)
            J[:, k] = 0.0 if r is None else (r0 - r) / h
        else:
            J[:, k] = (r - r0) / h
    return J


def _limit_bounded_step(step, bounded):
    """Shrink ``step`` so no bounded coordinate moves more than ``MAX_BOUNDED_STEP``.

    Without this a single step can throw a parameter deep into the flat tail
    of the logistic map, where its gradient vanishes and it cannot return.
    """
    biggest = float(np.max(np.abs(step[bounded]), initial=0.0))
    if biggest > MAX_BOUNDED_STEP:
        return step * (MAX_BOUNDED_STEP / biggest)
    return step


def _gauss_newton_gain(J, r) -> float:
    """Decrease in RSS predicted by an undamped Gauss-Newton step."""
    step = np.linalg.lstsq(J, -r, rcond=None)[0]
    lin = r + J @ step
    return float(r @ r - lin @ lin)


def _levenberg_marquardt(f, s, r, tol, max_iter, bounded):
    """Core LM iteration in internal coordinates.

    Returns ``(s, r, iterations, converged, message, history)``.
    """
    rss = float(r @ r)
    history = []
    J = _jacobian(f, s, r)
    A = J.T @ J
    g = J.T @ r
    diag_max = float(np.max(np.diag(A))) if A.size else 0.0
    mu = 1e-3 * max(diag_max, 1e-12)
    nu = 2.0
    converged = False
    message = "maximum iterations reached"
    it = 0
    for it in range(1, max_iter + 1):
        if rss == 0.0 or not np.any(g):
            converged, message = True, "zero residual or gradient"
            break
        d = np.diag(A).copy()
        d = np.maximum(d, 1e-12 * max(float(d.max()), 1e-300))
        try:
            step = np.linalg.solve(A + mu * np.diag(d), -g)
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2.0
            continue
        step = _limit_bounded_step(step, bounded)
        step_small = np.linalg.norm(step) <= tol * (np.linalg.norm(s) + tol)
        s_new = s + step
        r_new = f(s_new)
        rss_new = math.inf if r_new is None else float(r_new @ r_new)
        predicted = float(-step @ g + mu * step @ (d * step))
        rho = (rss - rss_new) / predicted if predicted > 0 else -1.0
        if rho > 0:
            rel = (rss - rss_new) / rss
            s, r, rss = s_new, r_new, rss_new
            history.append(rss)
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            J = _jacobian(f, s, r)
            A = J.T @ J
            g = J.T @ r
            if (rel < tol or step_small) and _gauss_newton_gain(J, r) <= tol * rss:
                converged, message = True, ("relative RSS change below tolerance"
                                            if rel < tol else "step below tolerance")
                break
        else:
            if step_small and _gauss_newton_gain(J, r) <= tol * rss:
                converged, message = True, "step below tolerance"
                break
            mu *= nu
            nu *= 2.0
            if mu > 1e30:
                converged, message = True, "no further decrease possible"
                break
    return s, r, it, converged, message, history


def _release_from_bounds(residuals, bt: BoundTransform, theta, rss):
    """Move parameters off a bound where stepping inward lowers the RSS.

    The logistic map flattens near a bound, so LM can stall there even when
    the RSS still decreases into the interior.  Returns the new point and its
    residuals, or ``None`` if every bound is a genuine (KKT) optimum.
    """
    flags = bt.at_bound(theta)
    if not np.any(flags):
        return None
    width = np.where(bt.both, bt.upper - bt.lower, 1.0)
    at_lower = bt.lo_fin & (np.abs(theta - bt.lower) <= AT_BOUND_TOL)
    best = None
    for k in np.flatnonzero(flags):
        direction = 1.0 if at_lower[k] else -1.0
        bound = bt.lower[k] if at_lower[k] else bt.upper[k]
        for frac in RELEASE_FRACTIONS:
            trial = theta.copy()
            trial[k] = bound + direction * frac * width[k]
            r = _safe_residuals(residuals, trial, None)
            if r is None:
                continue
            val = float(r @ r)
            if val < rss * (1.0 - RELEASE_GAIN) and (best is None or val < best[2]):
                best = (trial, r, val)
                break
    return None if best is None else best[:2]


def fit_least_squares(problem: FitProblem) -> FitResult:
    """Levenberg-Marquardt minimisation of the residual sum of squares.

    Stops when the RSS change or the step norm falls below ``problem.tol``
    (relative) and an undamped Gauss-Newton step also predicts a relative
    decrease below ``problem.tol``, so heavy damping is not mistaken for
    convergence.  A parameter that ends on a bound is then checked: if moving
    it inward lowers the RSS it is released and the iteration resumes.  After
    ``problem.max_iter`` iterations in total the best point found is returned
    with ``converged`` false.
    """
    bt = BoundTransform(problem.lower, problem.upper)
    s = bt.to_internal(problem.start)
    tol = problem.tol

    r = _safe_residuals(problem.residuals, bt.to_external(s))
    if r is None:
        raise InfeasibleStartError("residuals are not finite at the start values")
    m = r.size
    bounded = bt.lo_fin | bt.hi_fin

    def f(si):
        return _safe_residuals(problem.residuals, bt.to_external(si), m)

    history = [float(r @ r)]
    total = 0
    releases = 0
    while True:
        s, r, it, converged, message, hist = _levenberg_marquardt(
            f, s, r, tol, problem.max_iter - total, bounded)
        total += it
        history.extend(hist)
        if not converged or releases >= MAX_RELEASES:
            break
        released = _release_from_bounds(problem.residuals, bt, bt.to_external(s),
                                        float(r @ r))
        if released is None:
            break
        theta, r_rel = released
        logger.info("releasing parameters from bound at %s", theta)
        s, r = bt.to_internal(theta), r_rel
        history.append(float(r @ r))
        releases += 1
        if total >= problem.max_iter:
            converged, message = False, "maximum iterations reached"
            break

    theta = bt.to_external(s)
    if not converged:
        logger.warning("least squares did not converge after %d iterations", total)
    return FitResult(
        theta=theta,
        names=list(problem.names),
        rss=float(r @ r),
        iterations=total,
        converged=converged,
        at_bound=bt.at_bound(theta),
        message=message,
        n_obs=m,
        history=history,
        extra={"releases": releases} if releases else {},
    )


def fit_direct_nll(nll: Callable[[np.ndarray], float], start, bounds=None,
                   names: Sequence[str] | None = None, max_restarts: int = 20,
                   tol: float = 1e-12) -> FitResult:
    """Derivative-free (Nelder-Mead) minimisation of a negative log-likelihood.

    The simplex is restarted from the current best point until a restart no
    longer improves the objective, which guards against premature collapse.
    """
    x = np.asarray(start, dtype=float)
    names = list(names) if names is not None else [f"theta{i}" for i in range(x.size)]

    def safe(th):
        try:
            v = float(nll(th))
        except INFEASIBLE:
            return math.inf
        return v if np.isfinite(v) else math.inf

    best = safe(x)
    if not np.isfinite(best):
        raise InfeasibleStartError("negative log-likelihood not finite at start")
    nfev = 0
    converged = False
    for _ in range(max_restarts):
        res = minimize(safe, x, method="Nelder-Mead", bounds=bounds,
                       options={"xatol": 1e-10, "fatol": tol, "maxfev": 200000,
                                "adaptive": x.size > 4})
        nfev += res.nfev
        improved = best - res.fun
        if res.fun <= best:
            x, best = res.x, float(res.fun)
        if improved <= tol * max(1.0, abs(best)):
            converged = bool(res.success)
            break
    at_bound = np.zeros(x.size, dtype=bool)
    if bounds is not None:
        lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds])
        hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds])
        at_bound = (np.abs(x - lo) <= AT_BOUND_TOL) | (np.abs(hi - x) <= AT_BOUND_TOL)
    return FitResult(theta=x, names=names, rss=math.nan, iterations=nfev,
                     converged=converged, at_bound=at_bound,
                     message="nelder-mead", log_likelihood=-best)


def information_criteria(log_likelihood: float, df: int, n: int) -> tuple[float, float]:
    """AIC and BIC; ``df`` counts every estimated parameter including sigma."""
    if n < 1 or df < 1:
        raise ValueError("need n >= 1 and df >= 1")
    return 2.0 * df - 2.0 * log_likelihood, df * math.log(n) - 2.0 * log_likelihood
