"""Data cleaning for rate panels and single series.

Two passes, by date then by instrument:

* gap filling: monotone cubic interpolation across tenor on each date,
  linear interpolation across short time gaps, then flat (Libor family) or
  constant-spread (OIS) extrapolation;
* false-data repair: a trimmed-SD test against a seeded Monte-Carlo null
  decides whether an instrument is dirty, and isolated points / one-step
  plateaus are then replaced by the average of their neighbours.

``clean_spikes`` is the separate up-then-down cleaner for a single daily
series such as the effective fed funds rate.

Every alteration is recorded in a :class:`ChangeLog`.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from . import _kernels
from .core import (BP, InstrumentPanel, TimeSeries, order_stat_rank, require_valid)
from .errors import DegenerateInputError, InsufficientDataError, ValidationError

log = logging.getLogger(__name__)

INTERPOLATED = "interpolated"
TIME_FILLED = "time-filled"
EXTRAPOLATED_FLAT = "extrapolated-flat"
EXTRAPOLATED_SPREAD = "extrapolated-constant-spread"
OUTLIER_REPLACED = "outlier-replaced"
SPIKE_REMOVED = "spike-removed"
ACTIONS = (INTERPOLATED, TIME_FILLED, EXTRAPOLATED_FLAT, EXTRAPOLATED_SPREAD,
           OUTLIER_REPLACED, SPIKE_REMOVED)

# tenor-interpolation groups: OIS is its own curve, deposits + swaps form the Libor curve
# smallest jump the outlier rules act on; stops endless re-averaging when q(r) is 0
MIN_JUMP = 1e-12

CURVE_GROUPS = {"OIS": ("OIS",), "LIBOR": ("DEPO", "IRS")}
FLAT_KINDS = ("DEPO", "IRS", "ZERO", "SPREAD")


@dataclass(frozen=True)
class CleaningConfig:
    trim_fraction: float = 0.03
    mc_trials: int = 256
    threshold_sds: float = 5.0
    max_time_gap_days: int = 2
    spike_max_width_days: int = 5
    spike_return_tolerance: float = 0.10
    plateau_tolerance: float = 0.10
    rng_seed: int | None = None

    def __post_init__(self):
        if not 0 < self.trim_fraction < 1:
            raise ValidationError("trim_fraction must lie in (0, 1)")
        if self.mc_trials < 1:
            raise ValidationError("mc_trials must be >= 1")
        if not self.threshold_sds > 0:
            raise ValidationError("threshold_sds must be > 0")
        if self.max_time_gap_days < 0:
            raise ValidationError("max_time_gap_days must be >= 0")
        if self.spike_max_width_days < 1:
            raise ValidationError("spike_max_width_days must be >= 1")
        if not self.spike_return_tolerance > 0:
            raise ValidationError("spike_return_tolerance must be > 0")
        if not self.plateau_tolerance >= 0:
            raise ValidationError("plateau_tolerance must be >= 0")


@dataclass(frozen=True)
class Change:
    date: np.datetime64
    id: str
    action: str
    old: float | None
    new: float


@dataclass
class ChangeLog:
    entries: list = field(default_factory=list)
    unfilled: list = field(default_factory=list)

    def add(self, date, ident, action, old, new):
        if action not in ACTIONS:
            raise ValueError(f"unknown action {action!r}")
        self.entries.append(Change(np.datetime64(date, "D"), ident, action,
                                   None if old is None else float(old), float(new)))

    def extend(self, other: "ChangeLog") -> "ChangeLog":
        self.entries.extend(other.entries)
        self.unfilled.extend(u for u in other.unfilled if u not in self.unfilled)
        return self

    def sorted(self) -> "ChangeLog":
        # stable: same-date entries keep their rule order
        return ChangeLog(sorted(self.entries, key=lambda c: c.date), list(self.unfilled))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "id", "action", "old", "new"])
        for c in self.sorted().entries:
            w.writerow([str(c.date), c.id, c.action,
                        "" if c.old is None else repr(c.old), repr(c.new)])
        return buf.getvalue() if fh is None else ""

    def apply(self, data):
        """Replay the log on raw data (TimeSeries or InstrumentPanel)."""
        if isinstance(data, TimeSeries):
            values = np.array(data.values)
            present = np.array(data.present)
            pos = {d: i for i, d in enumerate(data.dates)}
            for c in self.entries:
                if c.id != data.id:
                    continue
                i = pos[c.date]
                values[i] = c.new
                present[i] = True
            return data.replace(values=values, present=present)
        quotes = np.array(data.quotes)
        present = np.array(data.present)
        pos = {d: i for i, d in enumerate(data.dates)}
        col = {ident: j for j, ident in enumerate(data.ids)}
        for c in self.entries:
            i, j = pos[c.date], col[c.id]
            quotes[i, j] = c.new
            present[i, j] = True
        return data.replace(quotes=quotes, present=present)


# ---------------------------------------------------------------------------
# gap filling

def hyman_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Knot derivatives of a C2 cubic spline passed through Hyman's
    monotonicity filter."""
    n = len(x)
    h = np.diff(x)
    s = np.diff(y) / h
    if n == 2:
        return np.array([s[0], s[0]])
    d = CubicSpline(x, y, bc_type="not-a-knot")(x, 1)
    out = np.array(d, dtype=float)
    for i in range(1, n - 1):
        if s[i - 1] * s[i] > 0:
            bound = 3.0 * min(abs(s[i - 1]), abs(s[i]))
            sign = 1.0 if s[i] > 0 else -1.0
            out[i] = sign * min(max(0.0, sign * out[i]), bound)
        else:
            out[i] = 0.0
    for i, sec in ((0, s[0]), (n - 1, s[-1])):
        if sec == 0 or out[i] * sec < 0:
            out[i] = 0.0
        elif abs(out[i]) > 3.0 * abs(sec):
            out[i] = 3.0 * sec
    return out


def monotone_cubic(x, y) -> CubicHermiteSpline:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return CubicHermiteSpline(x, y, hyman_slopes(x, y), extrapolate=False)


def fill_curve_date(values, present, tenors, *, date=None, ids=None):
    """Fill interior tenor gaps of one date's curve quotes.

    Returns ``(values, present, ChangeLog)``; quotes outside the range of
    present tenors are left missing.
    """
    values = np.array(values, dtype=float)
    present = np.array(present, dtype=bool)
    tenors = np.asarray(tenors, dtype=float)
    if present.sum() < 2:
        raise InsufficientDataError("need at least two quotes to interpolate across tenor")
    order = np.argsort(tenors, kind="mergesort")
    t, v, p = tenors[order], values[order], present[order]
    lo, hi = t[p][0], t[p][-1]
    todo = ~p & (t > lo) & (t < hi)
    changes = ChangeLog()
    if todo.any():
        spline = monotone_cubic(t[p], v[p])
        filled = spline(t[todo])
        for k, val in zip(np.flatnonzero(todo), filled):
            j = order[k]
            values[j] = val
            present[j] = True
            if date is not None:
                changes.add(date, ids[j] if ids is not None else str(tenors[j]),
                            INTERPOLATED, None, val)
    return values, present, changes


def _groups(panel: InstrumentPanel) -> list[np.ndarray]:
    kinds = np.array([i.kind for i in panel.instruments])
    out = []
    for members in CURVE_GROUPS.values():
        idx = np.flatnonzero(np.isin(kinds, members))
        if len(idx) >= 2:
            out.append(idx)
    return out


def fill_curve_dates(panel: InstrumentPanel) -> tuple[InstrumentPanel, ChangeLog]:
    """Apply :func:`fill_curve_date` to every date and curve group."""
    quotes = np.array(panel.quotes)
    present = np.array(panel.present)
    changes = ChangeLog()
    tenors = np.array([i.tenor for i in panel.instruments])
    ids = panel.ids
    for idx in _groups(panel):
        for r, d in enumerate(panel.dates):
            row_p = present[r, idx]
            if row_p.sum() < 2 or row_p.all():
                continue
            v, p, c = fill_curve_date(quotes[r, idx], row_p, tenors[idx], date=d,
                                      ids=[ids[j] for j in idx])
            quotes[r, idx] = v
            present[r, idx] = p
            changes.extend(c)
    return panel.replace(quotes=quotes, present=present), changes


def _matching_libor(panel: InstrumentPanel, j: int) -> int | None:
    tenor = panel.instruments[j].tenor
    for k, inst in enumerate(panel.instruments):
        if inst.kind in ("DEPO", "IRS") and abs(inst.tenor - tenor) < 1e-9:
            return k
    return None


def _fill_short_gaps(quotes, present, dates, ids, j, max_gap, changes):
    col_p = present[:, j]
    idx = np.flatnonzero(col_p)
    for a, b in zip(idx[:-1], idx[1:]):
        gap = b - a - 1
        if 0 < gap <= max_gap:
            for k in range(a + 1, b):
                w = (k - a) / (b - a)
                val = quotes[a, j] + w * (quotes[b, j] - quotes[a, j])
                quotes[k, j] = val
                present[k, j] = True
                changes.add(dates[k], ids[j], TIME_FILLED, None, val)


def _extrapolate(quotes, present, dates, ids, j, ref, changes):
    """Fill remaining gaps of column ``j`` from its nearest earlier (else later)
    observation: flat, or holding the spread to column ``ref`` constant."""
    col_p = present[:, j].copy()
    idx = np.flatnonzero(col_p)
    if len(idx) == 0:
        return
    n = len(dates)
    prev = np.maximum.accumulate(np.where(col_p, np.arange(n), -1))
    first = idx[0]
    for k in range(n):
        if col_p[k]:
            continue
        src = prev[k] if prev[k] >= 0 else first
        if ref is not None and present[k, ref] and present[src, ref]:
            spread = quotes[src, j] - quotes[src, ref]
            val = quotes[k, ref] + spread
            action = EXTRAPOLATED_SPREAD
        else:
            val = quotes[src, j]
            action = EXTRAPOLATED_FLAT
        quotes[k, j] = val
        present[k, j] = True
        changes.add(dates[k], ids[j], action, None, val)


def fill_time_gaps(panel: InstrumentPanel, cfg: CleaningConfig) -> tuple[InstrumentPanel, ChangeLog]:
    """Short time gaps, re-interpolation across tenor, then extrapolation.

    Present quotes are never altered.  Instruments with no quote at all are
    listed in ``ChangeLog.unfilled`` and stay missing.
    """
    quotes = np.array(panel.quotes)
    present = np.array(panel.present)
    dates, ids = panel.dates, panel.ids
    changes = ChangeLog()
    for j in range(len(ids)):
        if not present[:, j].any():
            log.warning("instrument %s has no quotes; left missing", ids[j])
            changes.unfilled.append(ids[j])
            continue
        _fill_short_gaps(quotes, present, dates, ids, j, cfg.max_time_gap_days, changes)
    stage, curve_changes = fill_curve_dates(panel.replace(quotes=quotes, present=present))
    changes.extend(curve_changes)
    quotes = np.array(stage.quotes)
    present = np.array(stage.present)
    kinds = [i.kind for i in panel.instruments]
    # Libor family first so OIS spreads have a complete reference
    for j in sorted(range(len(ids)), key=lambda j: kinds[j] == "OIS"):
        if kinds[j] in FLAT_KINDS:
            _extrapolate(quotes, present, dates, ids, j, None, changes)
        elif kinds[j] == "OIS":
            _extrapolate(quotes, present, dates, ids, j, _matching_libor(panel, j), changes)
    return panel.replace(quotes=quotes, present=present), changes.sorted()


# ---------------------------------------------------------------------------
# false-data detection and repair

def _n_remove(n: int, trim_fraction: float) -> int:
    return max(1, math.ceil(trim_fraction * n - 1e-9))


def sd_trim_ratio(diffs, trim_fraction: float) -> float:
    """SD of all differences over the SD after removing the largest
    ``ceil(trim_fraction * n)`` absolute differences."""
    d = np.asarray(diffs, dtype=float)
    if len(d) < 10:
        raise InsufficientDataError("need at least 10 differences")
    if np.all(d == d[0]):
        raise DegenerateInputError("all differences are equal")
    k = _n_remove(len(d), trim_fraction)
    ratio = _kernels.trim_ratio(d, k)
    if not np.isfinite(ratio):
        raise DegenerateInputError("standard deviation after trimming is zero")
    return float(ratio)


@lru_cache(maxsize=256)
def _null_ratio_stats(seed: int, stream: int, n: int, trials: int, trim: float) -> tuple:
    children = np.random.SeedSequence(seed, spawn_key=(stream,)).spawn(trials)
    sims = np.empty((trials, n))
    for r, child in enumerate(children):
        sims[r] = np.random.Generator(np.random.PCG64(child)).standard_normal(n)
    ratios = _kernels.trim_ratios(sims, _n_remove(n, trim))
    sd = float(np.std(ratios, ddof=1)) if trials > 1 else 0.0
    return float(np.mean(ratios)), sd


@dataclass(frozen=True)
class Detection:
    flag: bool
    observed_ratio: float
    threshold: float


def detect_bad_data(ts: TimeSeries, cfg: CleaningConfig, stream: int = 0) -> Detection:
    """Compare the trimmed-SD ratio of 1-day differences with its distribution
    under standard-normal differences of the same count.

    The null is simulated with ``cfg.mc_trials`` PCG64 substreams spawned from
    ``SeedSequence(cfg.rng_seed, spawn_key=(stream,))``.
    """
    if cfg.rng_seed is None:
        raise ValidationError("detect_bad_data needs an explicit rng_seed")
    x = require_valid(ts).observed()
    if len(x) < 30:
        raise InsufficientDataError(f"series {ts.id!r} has fewer than 30 observations")
    observed = sd_trim_ratio(np.diff(x), cfg.trim_fraction)
    mean, sd = _null_ratio_stats(int(cfg.rng_seed), int(stream), len(x) - 1,
                                 int(cfg.mc_trials), float(cfg.trim_fraction))
    threshold = mean + cfg.threshold_sds * sd
    return Detection(bool(observed > threshold), observed, threshold)


def outlier_quantile(x: np.ndarray, trim_fraction: float) -> float:
    """q(r): nearest-rank ``1 - trim_fraction`` quantile of absolute 1-day differences."""
    a = np.sort(np.abs(np.diff(x)))
    return float(a[order_stat_rank(len(a), 1.0 - trim_fraction) - 1])


def _log_alterations(ts, raw, cleaned, mask, action) -> ChangeLog:
    changes = ChangeLog()
    for i in np.flatnonzero(mask & (raw != cleaned)):
        changes.add(ts.dates[i], ts.id, action, raw[i], cleaned[i])
    return changes


def repair_outliers(ts: TimeSeries, cfg: CleaningConfig, q: float | None = None,
                    max_passes: int = 100) -> tuple[TimeSeries, ChangeLog]:
    """Replace isolated jumps and one-step plateaus by neighbour averages.

    A point is isolated when its differences to both neighbours exceed q(r) with
    opposite signs.  A plateau is two points reached by a jump above q(r) and
    left by an opposite jump above q(r), where the plateau is flat and the
    return lands on the pre-jump level, both to within ``plateau_tolerance``
    times the smaller jump.

    Passes repeat until nothing changes; q(r) is recomputed on each pass
    unless given explicitly, so a second call is a no-op.  Jumps must also
    exceed ``MIN_JUMP``, which matters only when most differences are zero.
    """
    raw = require_valid(ts).observed()
    x = raw.copy()
    mark = np.zeros(len(x), dtype=bool)
    if len(x) >= 3:
        for _ in range(max_passes):
            qq = outlier_quantile(x, cfg.trim_fraction) if q is None else q
            qq = max(qq, MIN_JUMP)
            if _kernels.outlier_pass(x, qq, cfg.plateau_tolerance, mark) == 0:
                break
    return ts.replace(values=x), _log_alterations(ts, raw, x, mark, OUTLIER_REPLACED)


def clean_spikes(ts: TimeSeries, cfg: CleaningConfig) -> tuple[TimeSeries, ChangeLog]:
    """Remove up-then-down moves of 1..``spike_max_width_days`` points.

    A run is removed when the value after it returns to within
    ``spike_return_tolerance`` (relative; absolute 1bp near zero) of the value
    before it, while every point of the run departs beyond that tolerance on
    the same side.  Narrow widths are exhausted before wider ones and any
    change restarts the scan at width one.
    """
    raw = require_valid(ts).observed()
    x = raw.copy()
    mark = np.zeros(len(x), dtype=bool)
    w = 1
    while w <= cfg.spike_max_width_days:
        if _kernels.spike_pass(x, w, cfg.spike_return_tolerance, BP, mark):
            w = 1
        else:
            w += 1
    return ts.replace(values=x), _log_alterations(ts, raw, x, mark, SPIKE_REMOVED)


def clean_series(ts: TimeSeries, cfg: CleaningConfig, method: str = "outliers",
                 stream: int = 0) -> tuple[TimeSeries, ChangeLog, Detection | None]:
    """Single-series cleaning: ``outliers`` (detect, then repair if flagged),
    ``spikes``, or ``both``."""
    if method not in ("outliers", "spikes", "both"):
        raise ValidationError(f"unknown cleaning method {method!r}")
    changes = ChangeLog()
    detection = None
    out = ts
    if method in ("outliers", "both"):
        detection = detect_bad_data(out, cfg, stream)
        if detection.flag:
            out, c = repair_outliers(out, cfg)
            changes.extend(c)
    if method in ("spikes", "both"):
        out, c = clean_spikes(out, cfg)
        changes.extend(c)
    return out, _collapse(ts, out, changes), detection


def _collapse(raw: TimeSeries, cleaned: TimeSeries, changes: ChangeLog) -> ChangeLog:
    # one entry per altered point: raw value -> final value, first rule that touched it
    seen = {}
    for c in changes.entries:
        seen.setdefault(c.date, c.action)
    out = ChangeLog(unfilled=list(changes.unfilled))
    pos = {d: i for i, d in enumerate(raw.dates)}
    for d, action in seen.items():
        i = pos[d]
        if raw.values[i] != cleaned.values[i]:
            out.add(d, raw.id, action, raw.values[i], cleaned.values[i])
    return out.sorted()


def clean_panel(panel: InstrumentPanel, cfg: CleaningConfig, repair: bool = True):
    """Full rate-panel cleaning: fill by date, then repair false data by instrument.

    Returns ``(panel, ChangeLog, {instrument id: Detection})``.
    """
    stage, changes = fill_curve_dates(panel)
    stage, c = fill_time_gaps(stage, cfg)
    changes.extend(c)
    detections = {}
    if repair:
        quotes = np.array(stage.quotes)
        for j, ident in enumerate(stage.ids):
            col = stage.column(j)
            if not col.complete or len(col) < 30:
                continue
            try:
                det = detect_bad_data(col, cfg, stream=j)
            except DegenerateInputError:
                continue
            detections[ident] = det
            if det.flag:
                fixed, c = repair_outliers(col, cfg)
                quotes[:, j] = fixed.values
                changes.extend(c)
        stage = stage.replace(quotes=quotes)
    return stage, changes.sorted(), detections
