"""Named drift parametrizations.

A parametrization maps the user-facing model parameters (for instance the
Richards asymptote ``a``, rate ``b`` and shape ``c``) to the linear-SDE
quantities ``beta0``, ``beta1``, the sigma multipliers and the parameters of
the transformation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

__all__ = ["Drift", "register_drift", "get_drift", "available_drifts"]


@dataclass(frozen=True)
class Drift:
    """``resolve(values) -> dict`` with keys ``beta0``, ``beta1`` and optionally
    ``mu_m``, ``mu_0``, ``mu_p`` and transform parameters."""

    name: str
    param_names: tuple[str, ...]
    resolve: Callable[[Mapping[str, float]], dict]
    transform: str | None = None


_DRIFTS: dict[str, Drift] = {}


def register_drift(drift: Drift, *, replace: bool = False) -> Drift:
    if drift.name in _DRIFTS and not replace:
        raise ValueError(f"drift {drift.name!r} already registered")
    _DRIFTS[drift.name] = drift
    return drift


def get_drift(name: str | Drift) -> Drift:
    if isinstance(name, Drift):
        return name
    try:
        return _DRIFTS[name]
    except KeyError:
        raise KeyError(f"unknown drift {name!r}; available: {sorted(_DRIFTS)}") from None


def available_drifts() -> list[str]:
    return sorted(_DRIFTS)


register_drift(Drift(
    "linear", ("beta0", "beta1"),
    lambda p: {"beta0": p["beta0"], "beta1": p["beta1"]},
))

# dH^c = b (a^c - H^c) dt + sigma_p dW
register_drift(Drift(
    "richards_additive", ("a", "b", "c"),
    lambda p: {"beta0": p["b"] * p["a"] ** p["c"], "beta1": -p["b"], "c": p["c"]},
    transform="power_richards",
))

# Lamperti form of dH^c = b (a^c - H^c)(dt + sigma_p dW): dY = -b dt + ...
register_drift(Drift(
    "richards_mult", ("a", "b", "c"),
    lambda p: {"beta0": -p["b"], "beta1": 0.0, "a": p["a"], "c": p["c"]},
    transform="log_mult_richards",
))

# Y = box_cox(H / a, c), dY = -b Y dt + sqrt|b| sigma_P dW
register_drift(Drift(
    "richards_scaled", ("a", "b", "c"),
    lambda p: {"beta0": 0.0, "beta1": -p["b"], "mu_p": math.sqrt(abs(p["b"])),
               "a": p["a"], "c": p["c"]},
    transform="richards_scale",
))
