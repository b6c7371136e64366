"""Exact simulation of linear SDEs with measurement and initial-value noise.

Random numbers come from numpy's PCG64 generator; normal variates use its
ziggurat sampler.  Each unit draws from its own stream, spawned from the
master seed with ``SeedSequence.spawn``, so unit ``j`` is the same whatever
the number of units simulated after it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .datasets import LongitudinalDataset, UnitData
from .fitting import fit_sde
from .hierarchy import ParamSpec, SdeModel
from .multivar import LinearSdeSystem, matrix_exponential, transition_covariance
from .sde import growth_factor
from .transforms import TransformDomainError, get_transform

__all__ = [
    "TrajectorySpec",
    "RecoveryReport",
    "simulate_trajectory",
    "simulate_transformed",
    "simulate_multivariate",
    "recover_parameters_test",
    "true_eta",
]


@dataclass(frozen=True)
class TrajectorySpec:
    """Generating model on absolute scales (sigmas are standard deviations)."""

    beta0: float
    beta1: float
    times: Sequence[float]
    sigma_p: float = 0.0
    sigma_m: float = 0.0
    sigma_0: float = 0.0
    x0: float = 0.0
    t0: float = 0.0
    transform: str = "identity"
    transform_params: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("times must be a non-empty 1-d sequence")
        if np.any(np.diff(t) <= 0) or not t[0] > self.t0:
            raise ValueError("times must be strictly increasing and after t0")
        if min(self.sigma_p, self.sigma_m, self.sigma_0) < 0:
            raise ValueError("sigmas must be non-negative")


def _unit_rngs(seed: int, n_units: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_units)]


def simulate_transformed(spec: TrajectorySpec, rng: np.random.Generator) -> np.ndarray:
    """One path of observations on the linear (transformed) scale."""
    tf = get_transform(spec.transform)
    t = np.asarray(spec.times, dtype=float)
    dt = np.diff(np.concatenate(([spec.t0], t)))
    b0, b1 = spec.beta0, spec.beta1
    ex = np.exp(b1 * dt)
    mean_inc = b0 * growth_factor(b1, dt)
    sd_inc = spec.sigma_p * np.sqrt(growth_factor(2.0 * b1, dt))
    state = float(tf(spec.x0, spec.transform_params)) + spec.sigma_0 * rng.standard_normal()
    shocks = rng.standard_normal(t.size)
    noise = rng.standard_normal(t.size)
    y = np.empty(t.size)
    for i in range(t.size):
        state = ex[i] * state + mean_inc[i] + sd_inc[i] * shocks[i]
        y[i] = state
    return y + spec.sigma_m * noise


def simulate_trajectory(spec: TrajectorySpec, n_units: int = 1) -> LongitudinalDataset:
    """Simulate ``n_units`` independent units on the original scale.

    Raises
    ------
    TransformDomainError
        If a simulated value lies outside the range of the transformation.
    """
    if n_units < 1:
        raise ValueError("n_units must be at least 1")
    tf = get_transform(spec.transform)
    t = np.asarray(spec.times, dtype=float)
    units = []
    for j, rng in enumerate(_unit_rngs(spec.seed, n_units)):
        y = simulate_transformed(spec, rng)
        try:
            x = np.asarray(tf.inv(y, spec.transform_params), dtype=float)
        except (ValueError, ArithmeticError) as exc:
            raise TransformDomainError(f"unit {j + 1}: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise TransformDomainError(f"unit {j + 1}: simulated value outside the transform range")
        units.append(UnitData(str(j + 1), t.copy(), x, x0=spec.x0, t0=spec.t0))
    return LongitudinalDataset(units=tuple(units), source=f"simulated (seed={spec.seed})")


def simulate_multivariate(system: LinearSdeSystem, times, seed: int = 0) -> np.ndarray:
    """Observations ``n x p`` of a multivariate system (``S``, ``V``, ``V0`` absolute)."""
    rng = np.random.default_rng(seed)
    t = np.asarray(times, dtype=float)
    dt = np.diff(np.concatenate(([system.t0], t)))
    if np.any(dt <= 0):
        raise ValueError("times must be strictly increasing and after t0")
    p = system.p
    off = system.equilibrium_offset()

    def draw(cov):
        # eigh tolerates singular covariances (zero noise components)
        w, q = np.linalg.eigh(cov)
        return q @ (np.sqrt(np.clip(w, 0.0, None)) * rng.standard_normal(p))

    state = system.y0 + draw(system.V0)
    out = np.empty((t.size, p))
    for i, d in enumerate(dt):
        E = matrix_exponential(system.A * d)
        state = E @ (state + off) - off + draw(transition_covariance(system.A, system.S, d))
        out[i] = state + draw(system.V)
    return out


def true_eta(spec: TrajectorySpec) -> float:
    total = spec.sigma_m**2 + spec.sigma_p**2
    return spec.sigma_m**2 / total if total > 0 else 0.0


@dataclass
class RecoveryReport:
    truth: dict
    estimate: dict
    error: dict
    sigma_p: float
    sigma_m: float
    converged: bool


def recover_parameters_test(truth: TrajectorySpec, n_units: int, n_times: int | None = None,
                            tol: float = 1e-10, max_iter: int = 500) -> RecoveryReport:
    """Simulate from ``truth``, refit the linear-drift model and report errors.

    ``n_times`` truncates ``truth.times`` when given.  ``eta`` is estimated
    only when the truth has both noise sources; otherwise it is fixed at its
    true value (0 or 1).
    """
    if n_times is not None:
        truth = TrajectorySpec(**{**truth.__dict__, "times": list(truth.times)[:n_times]})
    data = simulate_trajectory(truth, n_units)
    eta = true_eta(truth)
    both = truth.sigma_m > 0 and truth.sigma_p > 0
    specs = [ParamSpec("beta0", 0.0), ParamSpec("beta1", -0.1),
             ParamSpec("eta", 0.5 if both else eta, 0.0, 1.0, fixed=not both)]
    for name, value in truth.transform_params.items():
        specs.append(ParamSpec(name, value, fixed=True))
    model = SdeModel.build(data, specs, "linear", truth.transform)
    result, _ = fit_sde(model, tol=tol, max_iter=max_iter)
    est = dict(result.named)
    want = {"beta0": truth.beta0, "beta1": truth.beta1}
    if both:
        want["eta"] = eta
    return RecoveryReport(
        truth=want,
        estimate={k: est[k] for k in want},
        error={k: est[k] - v for k, v in want.items()},
        sigma_p=result.sigma_p,
        sigma_m=result.sigma_m,
        converged=result.converged,
    )
