"""Data Models: how observed daily levels become an m-day shock distribution
and how that distribution is carried to another market state.

Three kinds are supported:

``absolute``        shock = x[i] - x[i-m]
``relative``        shock = (x[i] - x[i-m]) / x[i-m]
``level-relative``  relative shock times g(l_now) / g(l_i), g a positive
                    polynomial of degree 1 or 2 in the market level

Differences overlap (stride one), so a series of n points yields n - m shocks.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import BP, MarketState, ShockDistribution, TimeSeries, as_array
from .errors import (InsufficientDataError, NearZeroDenominatorError, NonPositiveScaleError,
                     ValidationError)

SCHEMA_VERSION = 1
KINDS = ("absolute", "relative", "level-relative")
LEVEL_SOURCES = ("observation", "window")


@dataclass(frozen=True)
class LevelFunction:
    """Polynomial volatility scale ``a + b*l + c*l**2`` on ``domain``.

    With ``extrapolation="flat"`` levels above ``boundary`` (default: the
    domain's upper end) are evaluated at the boundary.
    """

    degree: int
    coeffs: tuple
    domain: tuple = (0.0, 0.20)
    extrapolation: str = "polynomial"
    boundary: float | None = None
    pvalues: tuple | None = None
    fit_window: str | None = None

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValidationError("level function degree must be 1 or 2")
        coeffs = tuple(self.coeffs) + (0,) * (3 - len(self.coeffs))
        if len(coeffs) != 3:
            raise ValidationError("coeffs must be (a, b) or (a, b, c)")
        if self.degree == 1 and coeffs[2] != 0:
            raise ValidationError("degree-1 level function must have c = 0")
        lo, hi = self.domain
        if not (np.isfinite(float(lo)) and np.isfinite(float(hi)) and lo < hi):
            raise ValidationError("level function domain must be finite with min < max")
        if self.extrapolation not in ("flat", "polynomial"):
            raise ValidationError("extrapolation must be 'flat' or 'polynomial'")
        object.__setattr__(self, "coeffs", coeffs)
        if self.pvalues is not None:
            object.__setattr__(self, "pvalues", tuple(self.pvalues))
        bad = self.first_nonpositive(lo, hi)
        if bad is not None:
            raise NonPositiveScaleError(
                f"level function is not positive at level {bad:.6g}", level=bad)

    @property
    def upper(self):
        return self.domain[1] if self.boundary is None else self.boundary

    def poly(self, level):
        a, b, c = self.coeffs
        return a + level * (b + level * c)

    def __call__(self, level):
        if self.extrapolation == "flat":
            if isinstance(level, np.ndarray):
                level = np.minimum(level, self.upper)
            elif level > self.upper:
                level = self.upper
        return self.poly(level)

    def first_nonpositive(self, lo, hi, n: int = 2001):
        """Smallest level in ``[lo, hi]`` where the scale is <= 0, else None."""
        grid = np.linspace(float(lo), float(hi), n)
        a, b, c = (float(v) for v in self.coeffs)
        if c != 0:
            vertex = -b / (2 * c)
            if lo < vertex < hi:
                grid = np.sort(np.append(grid, vertex))
        g = grid if self.extrapolation == "polynomial" else np.minimum(grid, float(self.upper))
        vals = a + g * (b + g * c)
        bad = np.flatnonzero(vals <= 0)
        return float(grid[bad[0]]) if len(bad) else None

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "coeffs": [float(v) for v in self.coeffs],
            "domain": [float(v) for v in self.domain],
            "extrapolation": self.extrapolation,
            "boundary": None if self.boundary is None else float(self.boundary),
            "pvalues": None if self.pvalues is None else [float(p) for p in self.pvalues],
            "fit_window": self.fit_window,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LevelFunction":
        unknown = set(d) - {"degree", "coeffs", "domain", "extrapolation", "boundary",
                            "pvalues", "fit_window"}
        if unknown:
            raise ValidationError(f"unknown level function keys: {sorted(unknown)}")
        return cls(int(d["degree"]), tuple(d["coeffs"]), tuple(d.get("domain", (0.0, 0.2))),
                   d.get("extrapolation", "polynomial"), d.get("boundary"),
                   d.get("pvalues"), d.get("fit_window"))


@dataclass(frozen=True)
class DataModelSpec:
    kind: str
    holding_days: int = 10
    level_function: LevelFunction | None = None
    level_source: str = "observation"
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown data model kind {self.kind!r}")
        if int(self.holding_days) < 1:
            raise ValidationError("holding_days must be >= 1")
        if (self.kind == "level-relative") != (self.level_function is not None):
            raise ValidationError("a level function is required exactly for level-relative")
        if self.level_source not in LEVEL_SOURCES:
            raise ValidationError(f"level_source must be one of {LEVEL_SOURCES}")

    @property
    def model_id(self) -> str:
        if self.name:
            return self.name
        if self.kind == "level-relative":
            deg = "linear" if self.level_function.degree == 1 else "quadratic"
            return f"level-relative-{deg}-m{self.holding_days}"
        return f"{self.kind}-m{self.holding_days}"

    @property
    def multiplicative(self) -> bool:
        return self.kind != "absolute"

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "holding_days": self.holding_days,
            "level_function": None if self.level_function is None else self.level_function.to_dict(),
            "level_source": self.level_source,
            "name": self.name,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "DataModelSpec":
        unknown = set(d) - {"schema_version", "kind", "holding_days", "level_function",
                            "level_source", "name"}
        if unknown:
            raise ValidationError(f"unknown data model keys: {sorted(unknown)}")
        lf = d.get("level_function")
        return cls(d["kind"], int(d.get("holding_days", 10)),
                   None if lf is None else LevelFunction.from_dict(lf),
                   d.get("level_source", "observation"), d.get("name"))

    @classmethod
    def from_json(cls, text: str) -> "DataModelSpec":
        return cls.from_dict(json.loads(text))


def _check_length(x, m: int):
    if m < 1:
        raise ValidationError("holding period must be >= 1")
    if len(x) <= m:
        raise InsufficientDataError(f"series of length {len(x)} is too short for m = {m}")


def diffs_absolute(x, m: int) -> np.ndarray:
    """``x[i] - x[i-m]`` for every i >= m (overlapping)."""
    arr = as_array(x)
    _check_length(arr, m)
    return arr[m:] - arr[:-m]


def _near_zero(start) -> np.ndarray:
    return np.array([abs(v) < BP for v in start], dtype=bool)


def diffs_relative(x, m: int) -> np.ndarray:
    """``(x[i] - x[i-m]) / x[i-m]``; start levels below 1bp in magnitude are an error."""
    arr = as_array(x)
    _check_length(arr, m)
    start = arr[:-m]
    bad = _near_zero(start)
    if bad.any():
        where = x.dates[:-m][bad] if isinstance(x, TimeSeries) else np.flatnonzero(bad)
        raise NearZeroDenominatorError(
            f"{int(bad.sum())} start level(s) within 1bp of zero", dates=where)
    return (arr[m:] - start) / start


def level_scale(fn: LevelFunction, l_obs, l_now):
    """``g(l_now) / g(l_obs)``; vectorised over ``l_obs``."""
    num = fn(l_now)
    den = fn(np.asarray(l_obs, dtype=float) if isinstance(l_obs, (list, tuple)) else l_obs)
    if np.any(np.asarray(num) <= 0):
        raise NonPositiveScaleError(f"level function not positive at {l_now}", level=l_now)
    den_arr = np.asarray(den)
    if np.any(den_arr <= 0):
        obs = np.atleast_1d(np.asarray(l_obs))
        bad = obs[np.atleast_1d(den_arr) <= 0][0]
        raise NonPositiveScaleError(f"level function not positive at {bad}", level=bad)
    return num / den


def build_distribution(x, spec: DataModelSpec, state_obs: MarketState | None,
                       state_use: MarketState) -> ShockDistribution:
    """Observations + observation-side state + use-side state -> shocks."""
    m = spec.holding_days
    if spec.kind == "absolute":
        shocks = diffs_absolute(x, m)
    else:
        shocks = diffs_relative(x, m)
        if spec.kind == "level-relative":
            if spec.level_source == "window":
                if state_obs is None:
                    raise ValidationError("window level source needs an observation state")
                l_obs = state_obs.level
            else:
                l_obs = as_array(x)[:-m]
            shocks = shocks * level_scale(spec.level_function, l_obs, state_use.level)
    if isinstance(x, TimeSeries):
        window = (x.dates[0], x.dates[-1])
    else:
        window = (None, None)
    return ShockDistribution(shocks, m, spec, window, state_use, state_obs, n_source=len(x))


class Scenarios(NamedTuple):
    values: np.ndarray
    breaches: int


def apply_shocks(current_value: float, dist: ShockDistribution, floor: float = 0.0) -> Scenarios:
    """Scenario levels from the current level; ``breaches`` counts scenarios below ``floor``."""
    if not np.isfinite(float(current_value)):
        raise ValidationError("current value must be finite")
    model = dist.model
    if getattr(model, "multiplicative", True):
        if abs(current_value) < BP:
            raise NearZeroDenominatorError(
                "relative shocks need a current level at least 1bp from zero")
        values = current_value * (1 + dist.shocks)
    else:
        values = current_value + dist.shocks
    return Scenarios(values, int(np.sum(values < floor)))
