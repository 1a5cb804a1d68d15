"""Missing-data statistics for a name x date quote panel (e.g. CDS spreads).

A name is *missing* on a business day when it has no quote that day but was
quoted on some earlier day; absence before a name's first quote is not a gap.
Panels are aligned to the weekday calendar first, so a business day with no
row counts as unquoted for every name.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .core import InstrumentPanel, TimeSeries, business_days, order_stat_rank
from .errors import InsufficientDataError, OutOfRangeError, ValidationError


@dataclass(frozen=True)
class GapReport:
    universe_count: int
    available_asof_count: int
    pct_available_in_window: float
    pct_available_throughout: float
    pct_with_k_gaps_in_span: TimeSeries | None = None

    def __post_init__(self):
        if not 0 <= self.available_asof_count <= self.universe_count:
            raise ValidationError("available_asof_count must lie in [0, universe_count]")
        for v in (self.pct_available_in_window, self.pct_available_throughout):
            if not 0.0 <= v <= 100.0:
                raise ValidationError("percentages must lie in [0, 100]")

    def to_dict(self) -> dict:
        d = asdict(self)
        track = self.pct_with_k_gaps_in_span
        d["pct_with_k_gaps_in_span"] = None if track is None else [
            [str(t), float(v)] for t, v in zip(track.dates, track.values)]
        return d


def calendar_presence(panel: InstrumentPanel) -> tuple[np.ndarray, np.ndarray]:
    """Business-day calendar spanning the panel and the presence mask on it."""
    cal = business_days(panel.dates[0], panel.dates[-1])
    pres = np.zeros((len(cal), panel.shape[1]), dtype=bool)
    rows = np.searchsorted(cal, panel.dates)
    ok = (rows < len(cal)) & (cal[np.minimum(rows, len(cal) - 1)] == panel.dates)
    pres[rows[ok]] = panel.present[ok]
    return cal, pres


def _window_rows(cal: np.ndarray, window) -> np.ndarray:
    start, end = (np.datetime64(w, "D") for w in window)
    if start > end:
        raise ValidationError(f"window start {start} is after end {end}")
    if start < cal[0] or end > cal[-1]:
        raise OutOfRangeError(f"window [{start}, {end}] outside panel [{cal[0]}, {cal[-1]}]")
    rows = np.flatnonzero((cal >= start) & (cal <= end))
    if len(rows) == 0:
        raise ValidationError("window contains no business days")
    return rows


def _asof_names(cal, pres, as_of) -> np.ndarray:
    as_of = np.datetime64(as_of, "D")
    if as_of < cal[0] or as_of > cal[-1]:
        raise OutOfRangeError(f"as_of {as_of} outside panel [{cal[0]}, {cal[-1]}]")
    r = np.searchsorted(cal, as_of)
    if r == len(cal) or cal[r] != as_of:
        return np.zeros(pres.shape[1], dtype=bool)
    return pres[r].copy()


def availability_report(panel: InstrumentPanel, as_of, window) -> GapReport:
    """Counts of names ever quoted and quoted on ``as_of``; of the latter, the
    percentage quoted at least once in ``window`` and on every business day of it."""
    cal, pres = calendar_presence(panel)
    avail = _asof_names(cal, pres, as_of)
    rows = _window_rows(cal, window)
    universe = int(pres.any(axis=0).sum())
    n = int(avail.sum())
    w = pres[rows][:, avail]
    some = int(w.any(axis=0).sum())
    every = int(w.all(axis=0).sum())
    pct = (lambda c: 100.0 * c / n if n else 0.0)
    return GapReport(universe, n, pct(some), pct(every))


def missing_mask(pres: np.ndarray) -> np.ndarray:
    return ~pres & _kernels.ever_before(pres)


def stress_gap_fraction(panel: InstrumentPanel, window, k: int = 3, span: int = 10,
                        as_of=None) -> TimeSeries:
    """Per business day of ``window``, the percentage of names quoted on
    ``as_of`` (default: last panel date) with at least ``k`` missing days in
    the trailing ``span`` business days."""
    if not 1 <= k <= span:
        raise ValidationError("need span >= k >= 1")
    cal, pres = calendar_presence(panel)
    rows = _window_rows(cal, window)
    if span > len(rows):
        raise ValidationError(f"span {span} exceeds window length {len(rows)}")
    names = _asof_names(cal, pres, cal[-1] if as_of is None else as_of)
    if not names.any():
        raise InsufficientDataError("no names are quoted on the as-of date")
    counts = _kernels.trailing_counts(missing_mask(pres)[:, names], span)
    hit = (counts[rows] >= k).sum(axis=1)
    return TimeSeries(f"gaps-k{k}-span{span}", cal[rows], 100.0 * hit / names.sum())


def percentile_track(panel: InstrumentPanel, q: float) -> TimeSeries:
    """Nearest-rank ``q`` quantile across the names quoted on each date."""
    if not 0 < q < 1:
        raise ValidationError("q must lie in (0, 1)")
    vals, present = [], []
    for r in range(panel.shape[0]):
        x = np.sort(panel.quotes[r, panel.present[r]])
        if len(x):
            vals.append(float(x[order_stat_rank(len(x), q) - 1]))
            present.append(True)
        else:
            vals.append(np.nan)
            present.append(False)
    return TimeSeries(f"q{q:g}", panel.dates, np.array(vals), np.array(present))
