"""Volatility as a function of market level.

Moves are bucketed by their starting level, per-bucket standard deviations
are regressed on the bucket median level, and the fitted polynomial becomes
a :class:`~histvar.datamodel.LevelFunction`.  Lookup tables of VAR / ES by
stress window, model, tenor and level bucket are built on top.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .core import BP, InstrumentPanel, MarketState, TimeSeries, as_array
from .datamodel import SCHEMA_VERSION, LevelFunction
from .errors import (HistVarError, InsufficientDataError, NonPositiveScaleError,
                     SingularDesignError, ValidationError)
from .metrics import RiskConfig, svar_report

TARGETS = ("relative", "absolute")
WEIGHTS = ("unweighted", "by-count")


@dataclass(frozen=True)
class LevelBucket:
    bucket_lo: float
    bucket_hi: float
    median_level: float
    sd_relative: float
    sd_absolute: float
    count: int
    thin: bool = False

    def __post_init__(self):
        if not self.bucket_lo < self.bucket_hi:
            raise ValidationError("bucket_lo must be below bucket_hi")
        if self.count < 1:
            raise ValidationError("bucket count must be >= 1")


def _sd(v: np.ndarray) -> float:
    return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0


def _classify(start: np.ndarray, end: np.ndarray, bucket_bp: float):
    if bucket_bp <= 0:
        raise ValidationError("bucket_bp must be positive")
    dabs = end - start
    with np.errstate(divide="ignore", invalid="ignore"):
        drel = np.where(np.abs(start) >= BP, dabs / start, np.nan)
    width = bucket_bp * BP
    idx = np.floor(start / width).astype(np.int64)
    # guard the floor against representation error at bucket edges
    idx[start < idx * width] -= 1
    idx[start >= (idx + 1) * width] += 1
    return dabs, drel, idx, width


def bucket_moves(x, m: int):
    """Start and end levels of every overlapping m-day move.

    ``x`` may be one series or a list of series (e.g. several tenors) whose
    moves are pooled.
    """
    if m < 1:
        raise ValidationError("holding period must be >= 1")
    parts = x if isinstance(x, (list, tuple)) else [x]
    starts, ends = [], []
    for p in parts:
        arr = as_array(p)
        if len(arr) <= m:
            raise InsufficientDataError(f"series of length {len(arr)} is too short for m = {m}")
        starts.append(arr[:-m])
        ends.append(arr[m:])
    return np.concatenate(starts), np.concatenate(ends)


def bucket_sd(x, m: int, bucket_bp: float = 25.0, min_count: int = 20) -> list[LevelBucket]:
    """Per-bucket SDs of relative and absolute m-day moves, ordered by level.

    Each move is assigned by its starting level.  Relative moves from levels
    within 1bp of zero are left out of ``sd_relative`` but still counted.
    Buckets with fewer than ``min_count`` moves are returned with ``thin=True``.
    """
    start, end = bucket_moves(x, m)
    return bucket_sd_from_moves(start, end, bucket_bp, min_count)


def bucket_sd_from_moves(start, end, bucket_bp: float = 25.0,
                         min_count: int = 20) -> list[LevelBucket]:
    """:func:`bucket_sd` on explicit (start level, end level) pairs."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    if start.shape != end.shape or start.ndim != 1 or len(start) == 0:
        raise ValidationError("start and end levels must be equal-length non-empty vectors")
    dabs, drel, idx, width = _classify(start, end, bucket_bp)
    out = []
    for b in np.unique(idx):
        sel = idx == b
        rel = drel[sel]
        rel = rel[np.isfinite(rel)]
        n = int(sel.sum())
        out.append(LevelBucket(
            bucket_lo=float(b * width),
            bucket_hi=float((b + 1) * width),
            median_level=float(np.median(start[sel])),
            sd_relative=_sd(rel) if len(rel) else float("nan"),
            sd_absolute=_sd(dabs[sel]),
            count=n,
            thin=n < min_count,
        ))
    if all(b.thin for b in out):
        raise InsufficientDataError(f"no bucket has at least {min_count} moves")
    return out


@dataclass(frozen=True)
class FitResult:
    degree: int
    coeffs: tuple
    stderr: tuple
    tstat: tuple
    pvalues: tuple
    resid_sd: float
    domain: tuple
    n_points: int
    target: str = "relative"
    weight: str = "unweighted"

    def __call__(self, level):
        a, b, c = self.coeffs
        return a + level * (b + level * c)

    def to_dict(self) -> dict:
        return asdict(self)


def fit_level_function(buckets, degree: int = 2, weight: str = "unweighted",
                       target: str = "relative") -> FitResult:
    """Least-squares polynomial of bucket SD against median level.

    Thin buckets are ignored.  Two-sided p-values use the t distribution with
    ``points - parameters`` degrees of freedom; for degree 1 the ``c`` entries
    are 0 for the coefficient and None for its diagnostics.
    """
    if degree not in (1, 2):
        raise ValidationError("degree must be 1 or 2")
    if weight not in WEIGHTS:
        raise ValidationError(f"weight must be one of {WEIGHTS}")
    if target not in TARGETS:
        raise ValidationError(f"target must be one of {TARGETS}")
    use = [b for b in buckets if not b.thin]
    y = np.array([b.sd_relative if target == "relative" else b.sd_absolute for b in use])
    keep = np.isfinite(y)
    use = [b for b, k in zip(use, keep) if k]
    y = y[keep]
    p = degree + 1
    if len(use) < degree + 2:
        raise InsufficientDataError(
            f"degree-{degree} fit needs at least {degree + 2} populated buckets, got {len(use)}")
    lvl = np.array([b.median_level for b in use])
    if np.ptp(lvl) == 0:
        raise SingularDesignError("all bucket levels are equal")
    X = np.vander(lvl, p, increasing=True)
    w = np.array([b.count for b in use], dtype=float) if weight == "by-count" else np.ones(len(use))
    sw = np.sqrt(w)
    Xw, yw = X * sw[:, None], y * sw
    coef, _, rank, _ = np.linalg.lstsq(Xw, yw, rcond=None)
    if rank < p:
        raise SingularDesignError(f"design matrix has rank {rank} < {p}")
    resid = yw - Xw @ coef
    dof = len(use) - p
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(Xw.T @ Xw)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, np.where(coef == 0, 0.0, np.inf))
    pv = 2.0 * stats.t.sf(np.abs(t), dof)
    pad = (lambda v, fill: tuple(float(a) for a in v) + (fill,) * (3 - p))
    return FitResult(
        degree=degree,
        coeffs=pad(coef, 0.0),
        stderr=pad(se, None),
        tstat=pad(t, None),
        pvalues=pad(pv, None),
        resid_sd=float(np.sqrt(s2)),
        domain=(float(lvl.min()), float(lvl.max())),
        n_points=len(use),
        target=target,
        weight=weight,
    )


def make_level_function(fit: FitResult, extrapolation: str = "flat", boundary: float | None = None,
                        max_level: float = 0.20) -> LevelFunction:
    """LevelFunction over the fit domain, checked positive out to ``max_level``."""
    coeffs = fit.coeffs[:2] if fit.degree == 1 else fit.coeffs
    fn = LevelFunction(fit.degree, coeffs, fit.domain, extrapolation, boundary,
                       pvalues=tuple(p for p in fit.pvalues if p is not None))
    lo = min(0.0, fit.domain[0])
    hi = max(max_level, fit.domain[1])
    bad = fn.first_nonpositive(lo, hi)
    if bad is not None:
        raise NonPositiveScaleError(f"level function is not positive at level {bad:.6g}", level=bad)
    return fn


def _poly_values(fn, grid: np.ndarray) -> np.ndarray:
    a, b, c = (float(v) for v in fn.coeffs)
    return a + grid * (b + grid * c)


def ratio_curve(fn_a, fn_b, grid) -> np.ndarray:
    """Pointwise ``fn_a(l) / fn_b(l)`` of two fitted polynomials on ``grid``."""
    g = np.asarray(grid, dtype=float)
    num = _poly_values(fn_a, g)
    den = _poly_values(fn_b, g)
    if np.any(den <= 0):
        bad = float(g[np.flatnonzero(den <= 0)[0]])
        raise NonPositiveScaleError(f"denominator fit is not positive at level {bad:.6g}", level=bad)
    return num / den


# ---------------------------------------------------------------------------
# lookup tables

CELL_FIELDS = ("model_id", "tenor", "bucket_lo", "bucket_hi", "level",
               "var_low", "var_high", "es_low", "es_high", "n_shocks")


@dataclass(frozen=True)
class LookupTable:
    window_id: str
    model_ids: tuple
    tenors: tuple
    level_buckets: tuple
    cells: tuple
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = len(self.model_ids) * len(self.tenors) * len(self.level_buckets)
        if len(self.cells) != expected:
            raise ValidationError(f"lookup table has {len(self.cells)} cells, expected {expected}")
        if not self.provenance.get("data_hash") or not self.provenance.get("config_hash"):
            raise ValidationError("lookup table needs data and config hashes")

    def cell(self, model_id: str, tenor: str, bucket: int) -> dict:
        lo, hi = self.level_buckets[bucket]
        for c in self.cells:
            if c["model_id"] == model_id and c["tenor"] == tenor and c["bucket_lo"] == lo:
                return c
        raise ValidationError(f"no cell ({model_id}, {tenor}, {lo})")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "window_id": self.window_id,
            "model_ids": list(self.model_ids),
            "tenors": list(self.tenors),
            "level_buckets": [list(b) for b in self.level_buckets],
            "cells": [dict(c) for c in self.cells],
            "provenance": dict(self.provenance),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "LookupTable":
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValidationError(f"unsupported lookup schema {d.get('schema_version')}")
        return cls(d["window_id"], tuple(d["model_ids"]), tuple(d["tenors"]),
                   tuple(tuple(b) for b in d["level_buckets"]), tuple(d["cells"]),
                   d["provenance"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("window_id",) + CELL_FIELDS)
        for c in self.cells:
            w.writerow([self.window_id] + [repr(c[k]) if isinstance(c[k], float) else c[k]
                                           for k in CELL_FIELDS])
        return buf.getvalue()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def data_hash(series: list[TimeSeries]) -> str:
    h = hashlib.sha256()
    for ts in series:
        h.update(ts.id.encode())
        for d, v, p in zip(ts.dates, ts.values, ts.present):
            h.update(f"{d},{repr(float(v)) if p else ''}\n".encode())
    return h.hexdigest()


def level_grid(lo: float, hi: float, bucket_bp: float = 25.0) -> list[tuple[float, float]]:
    """Contiguous buckets of ``bucket_bp`` covering ``[lo, hi)``."""
    width = bucket_bp * BP
    n = int(round((hi - lo) / width))
    if n < 1:
        raise ValidationError("level grid is empty")
    return [(lo + k * width, lo + (k + 1) * width) for k in range(n)]


def build_lookup_table(panel, window: tuple, specs, grid, tenors, cfg: RiskConfig,
                       window_id: str | None = None) -> LookupTable:
    """VAR / ES cells for every (spec, tenor, bucket), applied at the bucket midpoint.

    ``panel`` is an :class:`InstrumentPanel` of tenor-point rates or a mapping
    from tenor label to :class:`TimeSeries`; ``tenors`` selects its columns.
    """
    if isinstance(panel, InstrumentPanel):
        series = {t: panel.column(t) for t in tenors}
    else:
        series = {t: panel[t] for t in tenors}
    specs = list(specs)
    grid = [tuple(float(v) for v in b) for b in grid]
    if not specs or not grid or not tenors:
        raise ValidationError("lookup table needs at least one spec, tenor and bucket")
    start, end = (np.datetime64(w, "D") for w in window)
    windowed = [s.window(start, end) for s in series.values()]
    config = {
        "window": [str(start), str(end)],
        "specs": [s.to_dict() for s in specs],
        "grid": grid,
        "tenors": list(tenors),
        "risk": asdict(cfg),
    }
    provenance = {
        "data_hash": data_hash(windowed),
        "config_hash": sha256_text(json.dumps(config, sort_keys=True)),
    }
    cells = []
    for spec in specs:
        for tenor in tenors:
            for lo, hi in grid:
                mid = 0.5 * (lo + hi)
                try:
                    rep = svar_report(series[tenor], (start, end), spec,
                                      MarketState(end, mid), cfg)
                except HistVarError as e:
                    raise type(e)(f"cell ({spec.model_id}, {tenor}, {lo:g}): {e}") from e
                cells.append({
                    "model_id": spec.model_id, "tenor": tenor, "bucket_lo": lo,
                    "bucket_hi": hi, "level": mid, "var_low": rep.var_low,
                    "var_high": rep.var_high, "es_low": rep.es_low, "es_high": rep.es_high,
                    "n_shocks": rep.n_shocks,
                })
    return LookupTable(window_id or f"{start}/{end}", tuple(s.model_id for s in specs),
                       tuple(tenors), tuple(grid), tuple(cells), provenance)
