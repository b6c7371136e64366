"""Multi-unit models with global and fixed local parameters.

Units are independent given the parameters and share a single ``sigma**2``;
each contributes its own whitened block ``v_j = L_j^{-1} z_j`` and Jacobian
term, and the concatenated ``v`` is scaled by the global ``J**(1/n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .datasets import LongitudinalDataset, UnitData
from .gaussml import UVector
from .models import Drift, get_drift
from .sde import FinalStats, Multipliers, SdeParams, _unit_pieces, final_stats, sort_observations
from .transforms import TransformFamily, get_transform

__all__ = [
    "BindingError",
    "UnitEvaluationError",
    "ParamSpec",
    "ParameterBinding",
    "SdeModel",
    "uvector_hier",
]

GLOBAL_ONLY = ("eta", "eta0")
SDE_DEFAULTS = {"eta": 0.0, "eta0": 0.0, "x0": 0.0, "t0": 0.0}


class BindingError(ValueError):
    """Parameters cannot be resolved for every unit."""


class UnitEvaluationError(ValueError):
    """Evaluation failed for one unit; ``unit_id`` identifies it."""

    def __init__(self, unit_id: str, cause: Exception):
        super().__init__(f"unit {unit_id}: {cause}")
        self.unit_id = unit_id
        self.cause = cause


@dataclass(frozen=True)
class ParamSpec:
    """One model parameter.

    ``start`` may be a per-unit sequence for local parameters.  Fixed
    parameters keep their ``start`` value and are not optimised.
    """

    name: str
    start: float | Sequence[float]
    lower: float = -math.inf
    upper: float = math.inf
    scope: str = "global"
    fixed: bool = False

    def __post_init__(self):
        if self.scope not in ("global", "local"):
            raise BindingError(f"{self.name}: scope must be 'global' or 'local'")
        if self.scope == "local" and self.name in GLOBAL_ONLY:
            raise BindingError(f"{self.name} must be global")
        if not self.lower < self.upper:
            raise BindingError(f"{self.name}: lower bound must be below upper bound")


class ParameterBinding:
    """Maps the optimiser's flat vector to per-unit parameter values.

    Flat order: free globals in declaration order, then free locals grouped
    by parameter, units in dataset order.
    """

    def __init__(self, specs: Sequence[ParamSpec], unit_ids: Sequence[str]):
        self.specs = tuple(specs)
        self.unit_ids = tuple(str(u) for u in unit_ids)
        names = [s.name for s in self.specs]
        if len(set(names)) != len(names):
            raise BindingError("duplicate parameter names")
        self._by_name = {s.name: s for s in self.specs}
        self._slots: dict[str, int | list[int]] = {}
        labels, starts, lo, hi = [], [], [], []
        k = 0
        m = len(self.unit_ids)
        for s in self.specs:
            if s.fixed or s.scope != "global":
                continue
            self._slots[s.name] = k
            labels.append(s.name)
            starts.append(float(np.ravel(s.start)[0]) if np.ndim(s.start) else float(s.start))
            lo.append(s.lower)
            hi.append(s.upper)
            k += 1
        for s in self.specs:
            if s.fixed or s.scope != "local":
                continue
            st = self._local_values(s)
            self._slots[s.name] = list(range(k, k + m))
            labels.extend(f"{s.name}[{u}]" for u in self.unit_ids)
            starts.extend(st)
            lo.extend([s.lower] * m)
            hi.extend([s.upper] * m)
            k += m
        self.labels = labels
        self._start = np.array(starts, dtype=float)
        self.lower = np.array(lo, dtype=float)
        self.upper = np.array(hi, dtype=float)
        self._unit_index = {u: j for j, u in enumerate(self.unit_ids)}

    def _local_values(self, spec: ParamSpec) -> list[float]:
        m = len(self.unit_ids)
        if np.ndim(spec.start) == 0:
            return [float(spec.start)] * m
        vals = [float(v) for v in np.ravel(spec.start)]
        if len(vals) != m:
            raise BindingError(f"{spec.name}: {len(vals)} start values for {m} units")
        return vals

    @property
    def n_free(self) -> int:
        return self._start.size

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    def spec(self, name: str) -> ParamSpec:
        return self._by_name[name]

    def start_vector(self) -> np.ndarray:
        return self._start.copy()

    def resolve(self, flat, unit_id) -> dict[str, float]:
        """Named values for one unit."""
        flat = self._check(flat)
        j = self._unit_index.get(str(unit_id))
        if j is None:
            raise BindingError(f"unknown unit {unit_id!r}")
        out = {}
        for s in self.specs:
            slot = self._slots.get(s.name)
            if slot is None:
                if s.scope == "local":
                    out[s.name] = self._local_values(s)[j]
                else:
                    out[s.name] = float(s.start)
            elif isinstance(slot, list):
                out[s.name] = float(flat[slot[j]])
            else:
                out[s.name] = float(flat[slot])
        return out

    def named(self, flat) -> dict:
        """Globals as floats, locals as ``{unit_id: value}``; includes fixed values."""
        flat = self._check(flat)
        out = {}
        for s in self.specs:
            if s.scope == "local":
                vals = (self._local_values(s) if s.name not in self._slots
                        else [float(flat[i]) for i in self._slots[s.name]])
                out[s.name] = dict(zip(self.unit_ids, vals))
            else:
                slot = self._slots.get(s.name)
                out[s.name] = float(s.start) if slot is None else float(flat[slot])
        return out

    def flatten(self, values: Mapping) -> np.ndarray:
        """Inverse of :meth:`named` restricted to the free parameters."""
        flat = np.empty(self.n_free)
        for name, slot in self._slots.items():
            if isinstance(slot, list):
                local = values[name]
                for j, u in enumerate(self.unit_ids):
                    flat[slot[j]] = local[u]
            else:
                flat[slot] = values[name]
        return flat

    def with_spec(self, name: str, **changes) -> "ParameterBinding":
        """Copy with one parameter's spec changed (for example ``fixed=True``)."""
        specs = [replace(s, **changes) if s.name == name else s for s in self.specs]
        return ParameterBinding(specs, self.unit_ids)

    def _check(self, flat) -> np.ndarray:
        flat = np.asarray(flat, dtype=float).ravel()
        if flat.size != self.n_free:
            raise BindingError(f"expected {self.n_free} free values, got {flat.size}")
        return flat


def uvector_hier(units: Sequence[UnitData],
                 unit_params: Sequence[tuple[SdeParams, Multipliers]],
                 transform: TransformFamily | str,
                 final: bool = False):
    """u-vector for several independent units sharing ``sigma**2``.

    ``unit_params[j]`` holds the resolved parameters and multipliers of
    ``units[j]``.  ``eta`` and ``eta0`` must agree across units.
    """
    transform = get_transform(transform)
    if len(units) != len(unit_params) or not units:
        raise BindingError("need one parameter set per unit")
    eta = unit_params[0][0].eta
    eta0 = unit_params[0][0].eta0
    if any(p.eta != eta or p.eta0 != eta0 for p, _ in unit_params):
        raise BindingError("eta and eta0 must be global")
    blocks, log_js = [], []
    for unit, (params, mult) in zip(units, unit_params):
        try:
            x, t = sort_observations(unit.x, unit.t, params.t0)
            v, log_j = _unit_pieces(x, t, params, transform, mult, presorted=True)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise UnitEvaluationError(unit.unit_id, exc) from exc
        blocks.append(v)
        log_js.append(log_j)
    v = np.concatenate(blocks)
    # fsum: exactly rounded, so the total is independent of unit order.
    log_j = math.fsum(log_js)
    u = UVector(u=v / math.exp(log_j / v.size), log_jacobian=log_j)
    if not final:
        return u
    return final_stats(u, eta, eta0)


@dataclass
class SdeModel:
    """Transform, drift parametrization and parameter binding for a dataset."""

    transform: TransformFamily
    drift: Drift
    binding: ParameterBinding
    units: tuple[UnitData, ...] = field(default_factory=tuple)

    @classmethod
    def build(cls, dataset: LongitudinalDataset, specs: Sequence[ParamSpec],
              drift: str | Drift = "linear",
              transform: str | TransformFamily | None = None) -> "SdeModel":
        drift = get_drift(drift)
        transform = get_transform(transform or drift.transform or "identity")
        binding = ParameterBinding(specs, dataset.unit_ids)
        model = cls(transform, drift, binding, tuple(dataset.units))
        model._validate()
        return model

    def _validate(self):
        available = set(self.binding.names) | set(SDE_DEFAULTS)
        missing = [p for p in self.drift.param_names if p not in available]
        if missing:
            raise BindingError(f"drift {self.drift.name!r} needs parameters {missing}")
        probe = {name: 1.0 for name in available}
        provided = set(self.drift.resolve(probe)) | available
        missing = [p for p in self.transform.param_names if p not in provided]
        if missing:
            raise BindingError(f"transform {self.transform.name!r} needs parameters {missing}")

    def with_binding(self, binding: ParameterBinding) -> "SdeModel":
        return SdeModel(self.transform, self.drift, binding, self.units)

    def unit_values(self, flat, unit_id) -> dict[str, float]:
        values = dict(SDE_DEFAULTS)
        values.update(self.binding.resolve(flat, unit_id))
        return values

    def unit_params(self, flat) -> list[tuple[SdeParams, Multipliers]]:
        out = []
        for unit in self.units:
            values = self.unit_values(flat, unit.unit_id)
            mapped = self.drift.resolve(values)
            tparams = {k: mapped.get(k, values.get(k)) for k in self.transform.param_names}
            x0 = values["x0"] if unit.x0 is None else unit.x0
            t0 = values["t0"] if unit.t0 is None else unit.t0
            params = SdeParams(
                beta0=mapped["beta0"], beta1=mapped["beta1"],
                eta=values["eta"], eta0=values["eta0"], x0=x0, t0=t0,
                transform_params=tparams,
            )
            mult = Multipliers(
                mu_m=mapped.get("mu_m", values.get("mu_m", 1.0)),
                mu_0=mapped.get("mu_0", values.get("mu_0", 1.0)),
                mu_p=mapped.get("mu_p", values.get("mu_p", 1.0)),
            )
            out.append((params, mult))
        return out

    def uvector(self, flat, final: bool = False):
        return uvector_hier(self.units, self.unit_params(flat), self.transform, final=final)

    def residuals(self, flat) -> np.ndarray:
        return self.uvector(flat).u

    def final(self, flat) -> FinalStats:
        return self.uvector(flat, final=True)

    @property
    def n_obs(self) -> int:
        return sum(u.n for u in self.units)
