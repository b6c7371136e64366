"""Invertible, differentiable variable transformations.

Each family maps an observation ``x`` to the scale on which the process is
linear, ``y = phi(x, theta)``, and supplies the analytic derivative
``dy/dx`` needed for the Jacobian correction of the likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "TransformDomainError",
    "TransformFamily",
    "BoxCoxParams",
    "box_cox",
    "box_cox_inverse",
    "power_richards",
    "log_mult_richards",
    "register_transform",
    "get_transform",
    "available_transforms",
]

# Threshold below which the Box-Cox exponent is treated as zero (log branch).
LAMBDA_ZERO = 1e-9
SINGULAR_TOL = 1e-12


class TransformDomainError(ValueError):
    """Raised when a transformation is evaluated outside its domain."""


ArrayFunc = Callable[[np.ndarray, Mapping[str, float]], np.ndarray]


@dataclass(frozen=True)
class TransformFamily:
    """A named scalar transformation ``y = phi(x, theta)``.

    Parameters
    ----------
    name : str
        Registry key used in model configurations.
    param_names : tuple of str
        Names of the parameters ``theta`` the family reads.
    func : callable
        ``func(x, params) -> y``, vectorised over ``x``.
    derivative : callable
        ``derivative(x, params) -> dy/dx``.
    inverse : callable, optional
        ``inverse(y, params) -> x``; needed only for predictions and
        simulation on the original scale.
    """

    name: str
    param_names: tuple[str, ...]
    func: ArrayFunc
    derivative: ArrayFunc
    inverse: ArrayFunc | None = None
    description: str = field(default="", compare=False)

    def __call__(self, x, params: Mapping[str, float] | None = None) -> np.ndarray:
        return self.func(np.asarray(x, dtype=float), self._check(params))

    def deriv(self, x, params: Mapping[str, float] | None = None) -> np.ndarray:
        return self.derivative(np.asarray(x, dtype=float), self._check(params))

    def inv(self, y, params: Mapping[str, float] | None = None) -> np.ndarray:
        if self.inverse is None:
            raise NotImplementedError(f"transform {self.name!r} has no inverse")
        return self.inverse(np.asarray(y, dtype=float), self._check(params))

    def log_abs_jacobian(self, x, params: Mapping[str, float] | None = None) -> float:
        """Sum of ``log|dy/dx|`` over the observations."""
        d = self.deriv(x, params)
        with np.errstate(divide="ignore"):
            out = float(np.sum(np.log(np.abs(d))))
        if not np.isfinite(out):
            raise TransformDomainError(f"{self.name}: zero or infinite derivative")
        return out

    def _check(self, params):
        params = {} if params is None else params
        missing = [p for p in self.param_names if p not in params]
        if missing:
            raise KeyError(f"transform {self.name!r} missing parameters {missing}")
        return params


@dataclass(frozen=True)
class BoxCoxParams:
    lam: float


def _as_array(x):
    return np.asarray(x, dtype=float)


def box_cox(y, lam: float):
    """Box-Cox transformation ``(y**lam - 1) / lam``, ``log(y)`` at ``lam = 0``.

    Zero is accepted for ``lam > 0``, where the power is well defined; this
    covers covariates such as ages recorded as 0.
    """
    arr = _as_array(y)
    if np.any(arr < 0) or (lam <= 0 and np.any(arr == 0)):
        raise TransformDomainError("box_cox requires y > 0 (y >= 0 when lam > 0)")
    with np.errstate(divide="ignore"):
        logy = np.log(arr)
    # expm1 avoids cancellation in y**lam - 1 for small lam
    out = logy if abs(lam) < LAMBDA_ZERO else np.expm1(lam * logy) / lam
    return float(out) if np.ndim(y) == 0 else out


def box_cox_inverse(z, lam: float):
    arr = _as_array(z)
    if abs(lam) < LAMBDA_ZERO:
        out = np.exp(arr)
    else:
        if np.any(lam * arr < -1.0):
            raise TransformDomainError("box_cox inverse outside the range of the transform")
        with np.errstate(divide="ignore"):
            out = np.exp(np.log1p(lam * arr) / lam)
    return float(out) if np.ndim(z) == 0 else out


def _box_cox_deriv(y, lam):
    return y ** (lam - 1.0)


def _check_power_domain(h, c):
    if np.any(h < 0) and float(c) != int(c):
        raise TransformDomainError("negative height with non-integer exponent")


def power_richards(H, a: float = 1.0, c: float = 1.0, scale_aware: bool = False):
    """Bertalanffy-Richards transform.

    Plain form ``H**c`` (additive process noise); with ``scale_aware`` the
    Box-Cox of the ratio ``box_cox(H / a, c)``, which keeps ``a`` a proper
    scale parameter.
    """
    h = _as_array(H)
    if scale_aware:
        if a <= 0:
            raise TransformDomainError("scale parameter a must be positive")
        return box_cox(H / a if np.ndim(H) == 0 else h / a, c)
    _check_power_domain(h, c)
    with np.errstate(divide="ignore"):
        out = h**c
    return float(out) if np.ndim(H) == 0 else out


def log_mult_richards(H, a: float, c: float):
    """Lamperti transform for multiplicative noise, ``log|a**c - H**c|``."""
    h = _as_array(H)
    if a <= 0:
        raise TransformDomainError("asymptote a must be positive")
    _check_power_domain(h, c)
    gap = a**c - h**c
    if np.any(np.abs(gap) < SINGULAR_TOL):
        raise TransformDomainError("log_mult_richards singular where H**c == a**c")
    out = np.log(np.abs(gap))
    return float(out) if np.ndim(H) == 0 else out


def _log_mult_deriv(h, a, c):
    gap = a**c - h**c
    if np.any(np.abs(gap) < SINGULAR_TOL):
        raise TransformDomainError("log_mult_richards singular where H**c == a**c")
    return -c * h ** (c - 1.0) / gap


def _log_mult_inverse(y, a, c):
    # Branch below the asymptote, the one reached from H(t0) < a.
    base = a**c - np.exp(y)
    if np.any(base < 0):
        raise TransformDomainError("log_mult_richards inverse: value above asymptote")
    return base ** (1.0 / c)


_REGISTRY: dict[str, TransformFamily] = {}


def register_transform(family: TransformFamily, *, replace: bool = False) -> TransformFamily:
    """Add a family to the registry so configurations can refer to it by name."""
    if family.name in _REGISTRY and not replace:
        raise ValueError(f"transform {family.name!r} already registered")
    _REGISTRY[family.name] = family
    return family


def get_transform(name: str | TransformFamily) -> TransformFamily:
    if isinstance(name, TransformFamily):
        return name
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown transform {name!r}; available: {sorted(_REGISTRY)}"
        ) from None


def available_transforms() -> list[str]:
    return sorted(_REGISTRY)


register_transform(TransformFamily(
    "identity", (),
    func=lambda x, p: x.copy(),
    derivative=lambda x, p: np.ones_like(x),
    inverse=lambda y, p: y.copy(),
    description="y = x",
))

register_transform(TransformFamily(
    "log", (),
    func=lambda x, p: box_cox(x, 0.0),
    derivative=lambda x, p: 1.0 / x,
    inverse=lambda y, p: np.exp(y),
    description="y = log x",
))

register_transform(TransformFamily(
    "box_cox", ("lam",),
    func=lambda x, p: box_cox(x, p["lam"]),
    derivative=lambda x, p: _box_cox_deriv(x, p["lam"]),
    inverse=lambda y, p: box_cox_inverse(y, p["lam"]),
    description="y = (x**lam - 1) / lam",
))

register_transform(TransformFamily(
    "power_richards", ("c",),
    func=lambda x, p: power_richards(x, c=p["c"]),
    derivative=lambda x, p: p["c"] * x ** (p["c"] - 1.0),
    inverse=lambda y, p: np.asarray(y) ** (1.0 / p["c"]),
    description="y = x**c",
))

register_transform(TransformFamily(
    "richards_scale", ("a", "c"),
    func=lambda x, p: power_richards(x, p["a"], p["c"], scale_aware=True),
    derivative=lambda x, p: (x / p["a"]) ** (p["c"] - 1.0) / p["a"],
    inverse=lambda y, p: p["a"] * box_cox_inverse(y, p["c"]),
    description="y = box_cox(x / a, c)",
))

register_transform(TransformFamily(
    "log_mult_richards", ("a", "c"),
    func=lambda x, p: log_mult_richards(x, p["a"], p["c"]),
    derivative=lambda x, p: _log_mult_deriv(x, p["a"], p["c"]),
    inverse=lambda y, p: _log_mult_inverse(y, p["a"], p["c"]),
    description="y = log|a**c - x**c|",
))

