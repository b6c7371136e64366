"""Regression with Box-Cox transformations of both the response and the covariate.

Model: ``box_cox(y, lam_y) = beta0 + beta1 * box_cox(x, lam_x) + eps`` with
i.i.d. Gaussian ``eps``.  The Jacobian of ``y -> box_cox(y, lam_y)`` is
diagonal, so ``J**(1/n)`` is ``gm(y)**(lam_y - 1)`` and the ML fit is an
ordinary nonlinear least-squares problem.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .gaussml import LOG_2PI
from .optimize import FitProblem, FitResult, fit_direct_nll, fit_least_squares, information_criteria
from .transforms import box_cox, box_cox_inverse
from .validation import check_xy

__all__ = [
    "PARAM_NAMES",
    "LSQ_START",
    "NLL_START",
    "boxcox_residuals",
    "boxcox_negloglik",
    "fit_boxcox_regression",
    "fit_boxcox_regression_nll",
    "BoxCoxRegression",
]

PARAM_NAMES = ("beta0", "beta1", "lambda_x", "lambda_y")
# Start values: a log-linear fit (lambda_y = 0, lambda_x = 1) for least
# squares; the simplex run also needs sigma.
LSQ_START = (2.9, -0.11, 1.0, 0.0)
NLL_START = (3.0, -0.4, 0.4, 0.1, 0.4)


def _log_gm(y) -> float:
    return float(np.mean(np.log(y)))


def boxcox_residuals(theta, x, y) -> np.ndarray:
    """u-vector ``(box_cox(y) - beta0 - beta1 box_cox(x)) / gm(y)**(lam_y - 1)``."""
    beta0, beta1, lam_x, lam_y = map(float, theta)
    eps = box_cox(y, lam_y) - beta0 - beta1 * box_cox(x, lam_x)
    return eps / math.exp((lam_y - 1.0) * _log_gm(y))


def boxcox_negloglik(theta, x, y) -> float:
    """Exact negative log-likelihood with ``sigma`` as the fifth parameter."""
    beta0, beta1, lam_x, lam_y, sigma = map(float, theta)
    n = y.size
    eps = box_cox(y, lam_y) - beta0 - beta1 * box_cox(x, lam_x)
    s2 = sigma * sigma
    return (0.5 * n * (LOG_2PI + math.log(s2)) + float(eps @ eps) / (2.0 * s2)
            - n * (lam_y - 1.0) * _log_gm(y))


def _summarize(result: FitResult, x, y) -> FitResult:
    n = y.size
    rss = result.rss
    lam_y = float(result.theta[3])
    sigma = math.exp((lam_y - 1.0) * _log_gm(y)) * math.sqrt(rss / n)
    logl = -(n / 2.0) * (math.log(rss / n) + LOG_2PI + 1.0)
    df = result.theta.size + 1
    aic, bic = information_criteria(logl, df, n)
    result.sigma = sigma
    result.log_likelihood = logl
    result.df, result.aic, result.bic = df, aic, bic
    return result


def fit_boxcox_regression(x, y, start=LSQ_START, tol: float = 1e-10,
                          max_iter: int = 500) -> FitResult:
    """Least-squares ML fit; ``sigma`` is recovered from the optimal RSS."""
    x, y = check_xy(x, y)
    problem = FitProblem(lambda th: boxcox_residuals(th, x, y), start,
                         names=list(PARAM_NAMES), tol=tol, max_iter=max_iter)
    return _summarize(fit_least_squares(problem), x, y)


def fit_boxcox_regression_nll(x, y, start=NLL_START) -> FitResult:
    """Direct simplex minimisation of the negative log-likelihood (oracle)."""
    x, y = check_xy(x, y)
    bounds = [(None, None)] * 4 + [(1e-12, None)]
    res = fit_direct_nll(lambda th: boxcox_negloglik(th, x, y), start, bounds,
                         names=list(PARAM_NAMES) + ["sigma"])
    res.sigma = float(res.theta[4])
    res.n_obs = y.size
    res.df = res.theta.size
    res.aic, res.bic = information_criteria(res.log_likelihood, res.df, y.size)
    return res


class BoxCoxRegression(RegressorMixin, BaseEstimator):
    """Straight-line regression after Box-Cox transforming both variables.

    Parameters
    ----------
    start : tuple of 4 floats
        Start values for ``(beta0, beta1, lambda_x, lambda_y)``.
    tol, max_iter : optimiser settings.

    Attributes
    ----------
    intercept_, coef_, lambda_x_, lambda_y_, sigma_ : fitted values.
    result_ : the full :class:`FitResult`.
    """

    def __init__(self, start=LSQ_START, tol: float = 1e-10, max_iter: int = 500):
        self.start = start
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        x = self._column(X)
        res = fit_boxcox_regression(x, y, self.start, self.tol, self.max_iter)
        self.result_ = res
        self.intercept_, self.coef_, self.lambda_x_, self.lambda_y_ = map(float, res.theta)
        self.sigma_ = res.sigma
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        """Back-transformed linear predictor (the conditional median of ``y``)."""
        check_is_fitted(self, "result_")
        x = self._column(X)
        z = self.intercept_ + self.coef_ * box_cox(x, self.lambda_x_)
        return box_cox_inverse(z, self.lambda_y_)

    @staticmethod
    def _column(X) -> np.ndarray:
        arr = np.asarray(X, dtype=float)
        if arr.ndim == 2:
            if arr.shape[1] != 1:
                raise ValueError(f"expected a single feature, got {arr.shape[1]}")
            arr = arr[:, 0]
        return arr
