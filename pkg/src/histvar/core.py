"""Shared domain types: dated series, instrument panels, market states and
shock distributions.

Dates are ``numpy.datetime64[D]`` arrays on a weekday-only business calendar.
Missing observations are carried by an explicit boolean ``present`` mask;
the value stored under a missing slot is never read.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .errors import EmptyWindowError, ValidationError

BP = 1e-4

INSTRUMENT_KINDS = ("OIS", "DEPO", "IRS", "CDS", "ZERO", "SPREAD")
RATE_KINDS = ("OIS", "DEPO", "IRS")

_TENOR_RE = re.compile(r"^(\d+(?:\.\d+)?)([DWMY])$")


def order_stat_rank(n: int, p: float) -> int:
    """Smallest ``k`` in ``1..n`` with ``k / n >= p``: the 1-based rank of the
    lower empirical ``p``-quantile, robust to ``ceil(p * n)`` rounding."""
    if n < 1:
        raise ValidationError("empty sample")
    k = min(max(math.ceil(p * n), 1), n)
    while k > 1 and (k - 1) / n >= p:
        k -= 1
    while k < n and k / n < p:
        k += 1
    return k


def as_dates(dates: Iterable) -> np.ndarray:
    return np.asarray(list(dates) if not isinstance(dates, np.ndarray) else dates,
                      dtype="datetime64[D]")


def business_days(start, end) -> np.ndarray:
    """Weekday dates in ``[start, end]`` inclusive."""
    start = np.datetime64(start, "D")
    end = np.datetime64(end, "D")
    days = np.arange(start, end + 1, dtype="datetime64[D]")
    return days[np.is_busday(days)]


def parse_tenor(label: str) -> float:
    """``"3M"`` -> 0.25, ``"10Y"`` -> 10.0, ``"2W"`` -> 14/365."""
    m = _TENOR_RE.match(label.strip().upper())
    if not m:
        raise ValidationError(f"bad tenor label {label!r}")
    n, unit = float(m.group(1)), m.group(2)
    return {"D": n / 365.0, "W": 7 * n / 365.0, "M": n / 12.0, "Y": n}[unit]


def format_tenor(t: float) -> str:
    months = t * 12.0
    if abs(months - round(months)) < 1e-9:
        months = int(round(months))
        if months % 12 == 0:
            return f"{months // 12}Y"
        return f"{months}M"
    return f"{t:g}Y"


@dataclass(frozen=True, order=True)
class Instrument:
    kind: str
    tenor: float
    name: str = ""

    def __post_init__(self):
        if self.kind not in INSTRUMENT_KINDS:
            raise ValidationError(f"unknown instrument kind {self.kind!r}")
        if not (self.tenor > 0 and math.isfinite(self.tenor)):
            raise ValidationError(f"tenor must be positive, got {self.tenor!r}")

    @property
    def id(self) -> str:
        if self.kind == "CDS":
            return f"CDS:{self.name}"
        return f"{self.kind}:{format_tenor(self.tenor)}"

    @classmethod
    def parse(cls, ident: str) -> "Instrument":
        kind, sep, rest = ident.strip().partition(":")
        kind = kind.upper()
        if not sep or not rest:
            raise ValidationError(f"bad instrument id {ident!r}")
        if kind == "CDS":
            return cls("CDS", 5.0, rest)
        return cls(kind, parse_tenor(rest))


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _split_values(values) -> tuple[np.ndarray, np.ndarray]:
    """Turn a sequence of ``float | None`` into (values, present)."""
    vals = list(values)
    present = np.array([v is not None for v in vals], dtype=bool)
    arr = np.array([np.nan if v is None else float(v) for v in vals], dtype=float)
    return arr, present


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Daily observations of one quantity; ``present[i]`` is False where the
    observation is missing."""

    id: str
    dates: np.ndarray
    values: np.ndarray
    present: np.ndarray = None
    units: str = "decimal"

    def __post_init__(self):
        dates = as_dates(self.dates)
        if self.present is None:
            if isinstance(self.values, np.ndarray) and self.values.dtype != object:
                values = np.array(self.values, dtype=float)
                present = np.ones(values.shape, dtype=bool)
            else:
                values, present = _split_values(self.values)
        else:
            values = np.array(self.values, dtype=float)
            present = np.array(self.present, dtype=bool)
        object.__setattr__(self, "dates", _freeze(dates))
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "present", _freeze(present))

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def complete(self) -> bool:
        return bool(self.present.all())

    def observed(self) -> np.ndarray:
        """Values as a float array; raises if any observation is missing."""
        if not self.complete:
            missing = self.dates[~self.present]
            raise ValidationError(
                f"series {self.id!r} has {len(missing)} missing values, first at {missing[0]}")
        return np.array(self.values)

    def replace(self, values=None, present=None, dates=None, id=None) -> "TimeSeries":
        return TimeSeries(
            id=self.id if id is None else id,
            dates=self.dates if dates is None else dates,
            values=self.values if values is None else values,
            present=self.present if present is None else present,
            units=self.units,
        )

    def window(self, start, end) -> "TimeSeries":
        mask = _window_mask(self.dates, start, end)
        return self.replace(values=self.values[mask], present=self.present[mask],
                            dates=self.dates[mask])

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (self.id == other.id and self.units == other.units
                and np.array_equal(self.dates, other.dates)
                and np.array_equal(self.present, other.present)
                and np.array_equal(self.values[self.present], other.values[other.present]))


@dataclass(frozen=True, eq=False)
class InstrumentPanel:
    """Date x instrument quote matrix with an explicit presence mask."""

    dates: np.ndarray
    instruments: tuple
    quotes: np.ndarray
    present: np.ndarray = None

    def __post_init__(self):
        dates = as_dates(self.dates)
        instruments = tuple(
            i if isinstance(i, Instrument) else Instrument.parse(i) for i in self.instruments)
        quotes = np.array(self.quotes, dtype=float).reshape(len(dates), len(instruments))
        if self.present is None:
            present = np.ones(quotes.shape, dtype=bool)
        else:
            present = np.array(self.present, dtype=bool).reshape(quotes.shape)
        ids = [i.id for i in instruments]
        if len(set(ids)) != len(ids):
            raise ValidationError("instrument descriptors must be unique")
        object.__setattr__(self, "dates", _freeze(dates))
        object.__setattr__(self, "instruments", instruments)
        object.__setattr__(self, "quotes", _freeze(quotes))
        object.__setattr__(self, "present", _freeze(present))

    @property
    def ids(self) -> list[str]:
        return [i.id for i in self.instruments]

    @property
    def shape(self) -> tuple[int, int]:
        return self.quotes.shape

    def index(self, ident: str) -> int:
        try:
            return self.ids.index(ident)
        except ValueError:
            raise ValidationError(f"instrument {ident!r} not in panel") from None

    def column(self, ident: str | int) -> TimeSeries:
        j = ident if isinstance(ident, int) else self.index(ident)
        return TimeSeries(self.instruments[j].id, self.dates, self.quotes[:, j],
                          self.present[:, j])

    def replace(self, quotes=None, present=None) -> "InstrumentPanel":
        return InstrumentPanel(self.dates, self.instruments,
                               self.quotes if quotes is None else quotes,
                               self.present if present is None else present)

    def __eq__(self, other) -> bool:
        if not isinstance(other, InstrumentPanel):
            return NotImplemented
        return (self.instruments == other.instruments
                and np.array_equal(self.dates, other.dates)
                and np.array_equal(self.present, other.present)
                and np.array_equal(self.quotes[self.present], other.quotes[other.present]))


@dataclass(frozen=True)
class MarketState:
    as_of: np.datetime64
    level: float
    window_start: np.datetime64 = None

    def __post_init__(self):
        as_of = np.datetime64(self.as_of, "D")
        start = as_of if self.window_start is None else np.datetime64(self.window_start, "D")
        if not math.isfinite(float(self.level)):
            raise ValidationError("market state level must be finite")
        if start > as_of:
            raise ValidationError("window_start must not be after as_of")
        object.__setattr__(self, "as_of", as_of)
        object.__setattr__(self, "window_start", start)


@dataclass(frozen=True, eq=False)
class ShockDistribution:
    shocks: np.ndarray
    holding_days: int
    model: Any
    source_window: tuple
    state_used: MarketState
    state_obs: MarketState | None = None
    n_source: int = field(default=0)

    def __post_init__(self):
        shocks = np.asarray(self.shocks)
        if shocks.dtype != object:
            shocks = np.array(shocks, dtype=float)
            if not np.all(np.isfinite(shocks)):
                raise ValidationError("shock distribution contains non-finite values")
        if self.holding_days < 1:
            raise ValidationError("holding_days must be >= 1")
        if self.n_source and len(shocks) != self.n_source - self.holding_days:
            raise ValidationError("shock count must equal n - m")
        object.__setattr__(self, "shocks", _freeze(shocks))

    def __len__(self) -> int:
        return len(self.shocks)

    @property
    def model_id(self) -> str:
        return getattr(self.model, "model_id", str(self.model))


@dataclass(frozen=True)
class Violation:
    date: np.datetime64 | None
    rule: str
    detail: str = ""


def validate_series(ts: TimeSeries) -> list[Violation]:
    """Check the TimeSeries invariants; an empty list means the series is valid."""
    out: list[Violation] = []
    dates, values, present = ts.dates, ts.values, ts.present
    if not (len(dates) == len(values) == len(present)):
        out.append(Violation(None, "length-mismatch",
                             f"{len(dates)} dates, {len(values)} values"))
        return out
    for i in range(1, len(dates)):
        if dates[i] == dates[i - 1]:
            out.append(Violation(dates[i], "duplicate-date"))
        elif dates[i] < dates[i - 1]:
            out.append(Violation(dates[i], "non-increasing-date"))
    if len(dates):
        for d in dates[~np.is_busday(dates)]:
            out.append(Violation(d, "non-business-day"))
        bad = present & ~np.isfinite(values)
        for d in dates[bad]:
            out.append(Violation(d, "non-finite"))
    out.sort(key=lambda v: (v.date is not None, v.date if v.date is not None else 0))
    return out


def require_valid(ts: TimeSeries) -> TimeSeries:
    problems = validate_series(ts)
    if problems:
        first = problems[0]
        raise ValidationError(
            f"series {ts.id!r}: {len(problems)} violation(s), first {first.rule} at {first.date}")
    return ts


def validate_panel(panel: InstrumentPanel) -> list[Violation]:
    out = []
    for j in range(panel.shape[1]):
        for v in validate_series(panel.column(j)):
            out.append(Violation(v.date, v.rule, panel.instruments[j].id))
    return out


def _window_mask(dates: np.ndarray, start, end) -> np.ndarray:
    start = np.datetime64(start, "D")
    end = np.datetime64(end, "D")
    if start > end:
        raise ValidationError(f"window start {start} is after end {end}")
    return (dates >= start) & (dates <= end) & np.is_busday(dates)


def business_day_window(panel: InstrumentPanel, start, end) -> InstrumentPanel:
    """Sub-panel of the business dates in ``[start, end]``."""
    mask = _window_mask(panel.dates, start, end)
    if not mask.any():
        raise EmptyWindowError(f"no panel dates in [{start}, {end}]")
    return InstrumentPanel(panel.dates[mask], panel.instruments,
                           panel.quotes[mask], panel.present[mask])


def series_window(ts: TimeSeries, start, end) -> TimeSeries:
    out = ts.window(start, end)
    if len(out) == 0:
        raise EmptyWindowError(f"no dates of {ts.id!r} in [{start}, {end}]")
    return out


def as_array(x) -> np.ndarray:
    """Accept a TimeSeries or array-like and return a complete 1-d array.

    Object arrays (e.g. of ``fractions.Fraction``) pass through unchanged so the
    difference algebra can be checked in exact arithmetic.
    """
    if isinstance(x, TimeSeries):
        return x.observed()
    arr = np.asarray(x)
    if arr.dtype == object:
        return arr
    return np.asarray(arr, dtype=float)
