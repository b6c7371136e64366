"""Fitting SDE models by least squares on the u-vector."""

from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np

from .gaussml import PriorDensity, map_weighted_residuals
from .hierarchy import SdeModel
from .optimize import FitProblem, FitResult, fit_least_squares, information_criteria

__all__ = ["fit_sde", "summarize", "STRATEGIES"]

logger = logging.getLogger(__name__)

STRATEGIES = ("single", "two-stage")
WARMUP_ETA = 0.5


def _objective(model: SdeModel, prior: PriorDensity | None):
    if prior is None:
        return model.residuals

    def residuals(flat):
        u = model.residuals(flat)
        return map_weighted_residuals(u, prior, model.binding.named(flat))

    return residuals


def summarize(model: SdeModel, result: FitResult) -> FitResult:
    """Attach sigma estimates, log-likelihood and information criteria."""
    stats = model.final(result.theta)
    df = model.binding.n_free + 1
    aic, bic = information_criteria(stats.log_likelihood, df, stats.n)
    return replace(
        result,
        log_likelihood=stats.log_likelihood,
        sigma_p=stats.sigma_p,
        sigma_m=stats.sigma_m,
        sigma_0=stats.sigma_0,
        sigma=math.sqrt(stats.sigma2),
        df=df,
        aic=aic,
        bic=bic,
        n_obs=stats.n,
        extra={**result.extra, "rss_ml": stats.rss},
    )


def _run(model: SdeModel, start, tol, max_iter, prior) -> FitResult:
    b = model.binding
    problem = FitProblem(_objective(model, prior), start, b.lower, b.upper,
                         names=b.labels, tol=tol, max_iter=max_iter)
    return fit_least_squares(problem)


def fit_sde(model: SdeModel, strategy: str = "single", tol: float = 1e-10,
            max_iter: int = 500, prior: PriorDensity | None = None,
            start=None) -> tuple[FitResult, SdeModel]:
    """Minimise ``sum(u**2)`` over the free parameters of ``model``.

    ``strategy="two-stage"`` first fits with ``eta`` held at 0.5 and uses
    that solution to start the fit with ``eta`` free; it applies only when
    ``eta`` is a free parameter.

    Returns the summarised result and the model it refers to.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    b = model.binding
    start = b.start_vector() if start is None else np.asarray(start, dtype=float)
    stages = []
    if strategy == "two-stage" and "eta" in b.names and not b.spec("eta").fixed:
        warm = model.with_binding(b.with_spec("eta", start=WARMUP_ETA, fixed=True))
        warm_start = warm.binding.flatten(b.named(start))
        first = _run(warm, warm_start, tol, max_iter, prior)
        logger.info("warm-up (eta fixed at %.2f): rss=%.6g", WARMUP_ETA, first.rss)
        stages.append({"eta": WARMUP_ETA, "rss": first.rss, "theta": first.named,
                       "converged": first.converged})
        values = warm.binding.named(first.theta)
        values["eta"] = WARMUP_ETA
        start = b.flatten(values)
    result = _run(model, start, tol, max_iter, prior)
    if stages:
        result.extra["stages"] = stages
    if prior is not None:
        result.extra["prior"] = prior.name
        result.extra["rss_map"] = result.rss
    return summarize(model, result), model
