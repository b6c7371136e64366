"""Longitudinal datasets: per-unit observation series and CSV ingestion."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DataError",
    "UnitData",
    "LongitudinalDataset",
    "load_csv",
    "load_gagurine",
    "load_loblolly",
    "bundled_path",
]


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class UnitData:
    """Observations of one unit, sorted by time.

    ``x0``/``t0`` override the model's initial condition for this unit when
    given.
    """

    unit_id: str
    t: np.ndarray
    x: np.ndarray
    x0: float | None = None
    t0: float | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float).ravel()
        if t.size == 0 or t.size != x.size:
            raise DataError(f"unit {self.unit_id}: need matching, non-empty t and x")
        order = np.argsort(t, kind="stable")
        t, x = t[order], x[order]
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return int(self.t.size)


@dataclass(frozen=True)
class LongitudinalDataset:
    units: tuple[UnitData, ...]
    source: str = ""
    fingerprint: str = ""
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [u.unit_id for u in self.units]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate unit identifiers")
        object.__setattr__(self, "units", tuple(self.units))

    @property
    def n_obs(self) -> int:
        return sum(u.n for u in self.units)

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def unit_ids(self) -> list[str]:
        return [u.unit_id for u in self.units]

    def unit(self, unit_id) -> UnitData:
        for u in self.units:
            if u.unit_id == str(unit_id):
                return u
        raise KeyError(unit_id)

    def subset(self, unit_ids: Iterable) -> "LongitudinalDataset":
        wanted = [str(u) for u in unit_ids]
        return LongitudinalDataset(tuple(self.unit(u) for u in wanted),
                                   source=self.source, fingerprint=self.fingerprint,
                                   columns=self.columns)

    @classmethod
    def from_arrays(cls, t, x, groups=None, source: str = "") -> "LongitudinalDataset":
        t = np.asarray(t, dtype=float).ravel()
        x = np.asarray(x, dtype=float).ravel()
        if t.size != x.size:
            raise DataError("t and x must have the same length")
        if groups is None:
            return cls((UnitData("1", t, x),), source=source)
        groups = np.asarray(groups).ravel()
        if groups.size != t.size:
            raise DataError("groups must have the same length as t")
        order = []
        for g in groups:
            if g not in order:
                order.append(g)
        units = tuple(UnitData(str(g), t[groups == g], x[groups == g]) for g in order)
        return cls(units, source=source)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = np.concatenate([u.t for u in self.units])
        x = np.concatenate([u.x for u in self.units])
        g = np.concatenate([[u.unit_id] * u.n for u in self.units])
        return t, x, g


def _parse_float(text: str, column: str, row: int, path) -> float:
    s = text.strip()
    try:
        return float(s)
    except ValueError:
        hint = " (use '.' as decimal separator)" if "," in s else ""
        raise DataError(f"{path}: row {row}, column {column!r}: non-numeric value {text!r}{hint}") from None


def load_csv(path, t: str = "t", x: str = "x", unit: str | None = None,
             units: Sequence | None = None,
             allow_duplicate_times: bool = False) -> LongitudinalDataset:
    """Read a longitudinal CSV file.

    Units keep their first-appearance order; observations are sorted by time
    within each unit.  ``units`` optionally restricts (and orders) the units
    kept.  Repeated ``(unit, t)`` pairs are an error unless
    ``allow_duplicate_times`` is set, as for cross-sectional regression data.
    """
    path = Path(path)
    raw = path.read_bytes()
    text = raw.decode("utf-8-sig")
    reader = csv.DictReader(text.splitlines())
    if not reader.fieldnames:
        raise DataError(f"{path}: empty file")
    for col in (t, x) + ((unit,) if unit else ()):
        if col not in reader.fieldnames:
            raise DataError(f"{path}: missing column {col!r} (have {reader.fieldnames})")

    groups: dict[str, tuple[list, list]] = {}
    seen = set()
    for i, rec in enumerate(reader, start=2):
        uid = rec[unit].strip() if unit else "1"
        tv = _parse_float(rec[t], t, i, path)
        xv = _parse_float(rec[x], x, i, path)
        if (uid, tv) in seen and not allow_duplicate_times:
            raise DataError(f"{path}: row {i}: duplicate (unit, t) pair ({uid}, {tv})")
        seen.add((uid, tv))
        ts, xs = groups.setdefault(uid, ([], []))
        ts.append(tv)
        xs.append(xv)
    if not groups:
        raise DataError(f"{path}: no data rows")

    ids = list(groups) if units is None else [str(u) for u in units]
    missing = [u for u in ids if u not in groups]
    if missing:
        raise DataError(f"{path}: units not found: {missing}")
    data = tuple(UnitData(u, groups[u][0], groups[u][1]) for u in ids)
    return LongitudinalDataset(data, source=str(path),
                               fingerprint=hashlib.sha256(raw).hexdigest(),
                               columns={"t": t, "x": x, "unit": unit})


def bundled_path(name: str) -> Path:
    """Path of a file shipped in the package ``data`` directory."""
    return Path(str(resources.files("reducible_sde") / "data" / name))


def load_gagurine() -> LongitudinalDataset:
    """GAG concentration (``x``) against age (``t``) for 314 children."""
    return load_csv(bundled_path("gagurine.csv"), t="Age", x="GAG",
                    allow_duplicate_times=True)


def load_loblolly(units: Sequence | None = None) -> LongitudinalDataset:
    """Loblolly pine heights, 14 trees by 6 ages."""
    return load_csv(bundled_path("loblolly.csv"), t="age", x="height", unit="Seed", units=units)
