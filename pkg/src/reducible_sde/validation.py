"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

__all__ = ["check_xy", "check_longitudinal", "check_bounds"]


def _vector(values, name: str) -> np.ndarray:
    try:
        arr = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name} must be numeric") from exc
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_xy(x, y, positive_y: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Finite 1-d arrays of equal length; ``y > 0`` unless disabled."""
    x = _vector(x, "x")
    y = _vector(y, "y")
    if x.size != y.size:
        raise ValueError(f"x and y differ in length ({x.size} vs {y.size})")
    if positive_y and np.any(y <= 0):
        raise ValueError("y must be strictly positive")
    return x, y


def check_longitudinal(t, x, groups=None):
    """Validate times, observations and optional unit labels.

    Returns ``(t, x, groups)`` with ``groups`` as an object array of strings
    (all ``"0"`` when not given).
    """
    t = _vector(t, "t")
    x = _vector(x, "x")
    if t.size != x.size:
        raise ValueError(f"t and x differ in length ({t.size} vs {x.size})")
    if groups is None:
        g = np.full(t.size, "0", dtype=object)
    else:
        g = np.asarray(groups).astype(str).astype(object).ravel()
        if g.size != t.size:
            raise ValueError(f"groups has {g.size} entries for {t.size} observations")
    return t, x, g


def check_bounds(lower, upper, start) -> None:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    start = np.asarray(start, dtype=float)
    if np.any(lower >= upper):
        raise ValueError("each lower bound must be below its upper bound")
    if np.any(start < lower) or np.any(start > upper):
        raise ValueError("start values outside bounds")
