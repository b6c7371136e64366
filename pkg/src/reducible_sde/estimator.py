"""Scikit-learn style estimator for reducible SDE growth models."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.metrics import r2_score
from sklearn.utils.validation import check_is_fitted

from .datasets import LongitudinalDataset
from .fitting import fit_sde
from .gaussml import PriorDensity
from .hierarchy import ParamSpec, SdeModel
from .sde import SdeParams, mean_trajectory
from .validation import check_longitudinal

__all__ = ["ReducibleSDE", "DEFAULT_PARAMETERS", "as_param_specs"]

DEFAULT_PARAMETERS = {
    "beta0": {"start": 0.0},
    "beta1": {"start": -0.1},
    "eta": {"start": 0.0, "lower": 0.0, "upper": 1.0, "fixed": True},
}


def as_param_specs(parameters) -> list[ParamSpec]:
    """Accept ParamSpecs, ``{name: {start, lower, ...}}`` or a list of dicts with ``name``."""
    if isinstance(parameters, Mapping):
        items = [{"name": k, **(v if isinstance(v, Mapping) else {"start": v})}
                 for k, v in parameters.items()]
    else:
        items = list(parameters)
    specs = []
    for item in items:
        if isinstance(item, ParamSpec):
            specs.append(item)
            continue
        kw = dict(item)
        for key in ("lower", "upper"):
            if kw.get(key) is None:
                kw.pop(key, None)
            else:
                kw[key] = float(kw[key])
        specs.append(ParamSpec(**kw))
    return specs


class ReducibleSDE(RegressorMixin, BaseEstimator):
    """Fit a transformed linear SDE with process and measurement noise.

    ``X`` holds observation times (one column) and ``y`` the observations on
    the original scale; pass ``groups`` to fit several units with global and
    local parameters.

    Parameters
    ----------
    drift : str
        Registered drift parametrization, e.g. ``"linear"`` or
        ``"richards_additive"``.
    transform : str or None
        Transformation family; ``None`` uses the drift's default.
    parameters : mapping or list
        Parameter declarations, see :func:`as_param_specs`.  ``None`` fits
        ``beta0`` and ``beta1`` with ``eta`` fixed at 0.
    strategy : {"single", "two-stage"}
    tol, max_iter : optimiser settings.
    prior : PriorDensity or None
        If given, the MAP estimate is computed instead of ML.
    """

    def __init__(self, drift: str = "linear", transform: str | None = None,
                 parameters=None, strategy: str = "single", tol: float = 1e-10,
                 max_iter: int = 500, prior: PriorDensity | None = None):
        self.drift = drift
        self.transform = transform
        self.parameters = parameters
        self.strategy = strategy
        self.tol = tol
        self.max_iter = max_iter
        self.prior = prior

    def _specs(self) -> list[ParamSpec]:
        return as_param_specs(DEFAULT_PARAMETERS if self.parameters is None else self.parameters)

    def fit(self, X, y, groups=None):
        t, x, g = check_longitudinal(X, y, groups)
        data = LongitudinalDataset.from_arrays(t, x, g, source="array")
        model = SdeModel.build(data, self._specs(), self.drift, self.transform)
        result, model = fit_sde(model, self.strategy, self.tol, self.max_iter, self.prior)
        self.model_ = model
        self.result_ = result
        self.params_ = model.binding.named(result.theta)
        self.sigma_p_ = result.sigma_p
        self.sigma_m_ = result.sigma_m
        self.sigma_0_ = result.sigma_0
        self.log_likelihood_ = result.log_likelihood
        self.aic_, self.bic_ = result.aic, result.bic
        self.converged_ = result.converged
        self.n_features_in_ = 1
        return self

    def _unit_sde(self, unit_id) -> tuple[SdeParams, object]:
        model = self.model_
        try:
            idx = [u.unit_id for u in model.units].index(str(unit_id))
        except ValueError:
            raise ValueError(f"unit {unit_id!r} was not seen during fit") from None
        params, _ = model.unit_params(self.result_.theta)[idx]
        return params, model.transform

    def predict(self, X, groups=None) -> np.ndarray:
        """Noise-free trajectory from each unit's initial condition."""
        check_is_fitted(self, "result_")
        t = np.asarray(X, dtype=float).ravel()
        if groups is None:
            ids = [u.unit_id for u in self.model_.units]
            if len(ids) != 1:
                raise ValueError("groups are required for a multi-unit fit")
            g = np.full(t.size, ids[0], dtype=object)
        else:
            _, _, g = check_longitudinal(t, np.zeros_like(t), groups)
        out = np.empty(t.size)
        for unit_id in dict.fromkeys(g):
            mask = g == unit_id
            params, tf = self._unit_sde(unit_id)
            out[mask] = mean_trajectory(t[mask], params, tf)
        return out

    def score(self, X, y, groups=None, sample_weight=None) -> float:
        """R-squared of :meth:`predict` on the original scale."""
        return r2_score(y, self.predict(X, groups), sample_weight=sample_weight)

    def loglik(self, theta: Mapping[str, float] | Sequence[float]) -> float:
        """Profile log-likelihood at ``theta`` (flat vector or named values)."""
        check_is_fitted(self, "model_")
        b = self.model_.binding
        flat = b.flatten(theta) if isinstance(theta, Mapping) else np.asarray(theta, float)
        return self.model_.final(flat).log_likelihood
