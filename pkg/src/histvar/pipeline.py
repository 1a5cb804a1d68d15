"""Rate-panel pipeline: cleaning, bootstrap, tenor points, shocks, swap P&L.

Curves of every date are re-expressed on a common tenor grid as discount
zero rates (``ZERO:<tenor>``) and projection-minus-discount spreads
(``SPREAD:<tenor>``).  The Data Model under study shocks the zero rates; the
spreads are shocked absolutely, since they sit at or near zero in
single-curve history where relative changes are undefined.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cleaning import CleaningConfig, ChangeLog, clean_panel
from .core import Instrument, InstrumentPanel, MarketState, TimeSeries, business_day_window
from .curvebuild import (CurveSet, ZeroCurve, bootstrap_panel, par_swap_pnl, regime_for,
                         tenor_rates)
from .datamodel import DataModelSpec, apply_shocks, build_distribution, diffs_absolute
from .errors import InsufficientDataError, ValidationError
from .metrics import RiskConfig, RiskReport, report_from_pnl, svar_report

RATE_KINDS = ("OIS", "DEPO", "IRS")


@dataclass(frozen=True)
class PreparedPanel:
    """Cleaned quotes, their curves and the tenor-point panel."""

    cleaned: InstrumentPanel
    changes: ChangeLog
    curves: list
    points: InstrumentPanel
    tenors: tuple


def libor_tenors(panel: InstrumentPanel) -> tuple:
    t = sorted({i.tenor for i in panel.instruments if i.kind in ("DEPO", "IRS")})
    if not t:
        raise ValidationError("panel has no deposit or Libor swap columns")
    return tuple(t)


def tenor_point_panel(curves, tenors) -> InstrumentPanel:
    """Discount zero rates and spreads at ``tenors`` for every curve set."""
    tenors = tuple(float(t) for t in tenors)
    rows = []
    for cs in curves:
        z, s = tenor_rates(cs, tenors)
        rows.append(np.concatenate([z, s]))
    insts = [Instrument("ZERO", t) for t in tenors] + [Instrument("SPREAD", t) for t in tenors]
    dates = [cs.discount.as_of for cs in curves]
    return InstrumentPanel(dates, insts, np.array(rows))


def curve_from_points(as_of, tenors, zeros, spreads, regime: str) -> CurveSet:
    disc = ZeroCurve(as_of, tenors, zeros, "discount")
    if regime == "single-curve":
        return CurveSet(disc, None, regime)
    proj = ZeroCurve(as_of, tenors, np.asarray(zeros) + np.asarray(spreads), "projection")
    return CurveSet(disc, proj, regime)


def prepare_panel(panel: InstrumentPanel, cfg: CleaningConfig | None, regime: str = "auto",
                  cutoff: str = "2004-01-01") -> PreparedPanel:
    """Clean (unless ``cfg`` is None), bootstrap every date and build tenor points."""
    keep = [i for i in panel.instruments if i.kind in RATE_KINDS]
    if not keep:
        raise ValidationError("panel has no OIS, deposit or Libor swap columns")
    cols = [panel.index(i.id) for i in keep]
    panel = InstrumentPanel(panel.dates, keep, panel.quotes[:, cols], panel.present[:, cols])
    if cfg is None:
        cleaned, changes = panel, ChangeLog()
    else:
        cleaned, changes, _ = clean_panel(panel, cfg)
    if not cleaned.present.all():
        raise InsufficientDataError("panel still has missing quotes after cleaning")
    curves = bootstrap_panel(cleaned, regime, cutoff)
    tenors = libor_tenors(cleaned)
    return PreparedPanel(cleaned, changes, curves, tenor_point_panel(curves, tenors), tenors)


def swap_pnl_scenarios(points: InstrumentPanel, window: tuple, spec: DataModelSpec,
                       cfg: RiskConfig, as_of, maturity: float, direction: str = "payer",
                       regime: str | None = None) -> tuple[np.ndarray, int]:
    """P&L of a par swap struck at ``as_of`` under every shock date of ``window``.

    Returns the P&L vector and the number of zero-rate scenarios below the floor.
    """
    as_of = np.datetime64(as_of, "D")
    now = np.flatnonzero(points.dates == as_of)
    if len(now) == 0:
        raise ValidationError(f"as_of {as_of} is not a panel date")
    r = int(now[0])
    n_t = points.shape[1] // 2
    tenors = np.array([i.tenor for i in points.instruments[:n_t]])
    z0 = points.quotes[r, :n_t]
    s0 = points.quotes[r, n_t:]
    regime = regime or regime_for(as_of)
    win = business_day_window(points, *window)
    if len(win.dates) < cfg.window_days:
        raise InsufficientDataError(
            f"window {window[0]}..{window[1]} has {len(win.dates)} dates, need {cfg.window_days}")
    m = spec.holding_days
    scen_z = np.empty((len(win.dates) - m, n_t))
    scen_s = np.empty_like(scen_z)
    breaches = 0
    for j in range(n_t):
        col = win.column(j)
        obs = MarketState(win.dates[-1], float(np.mean(col.values)), win.dates[0])
        use = MarketState(as_of, float(z0[j]))
        sc = apply_shocks(z0[j], build_distribution(col, spec, obs, use), cfg.floor)
        scen_z[:, j] = sc.values
        breaches += sc.breaches
        scen_s[:, j] = s0[j] + diffs_absolute(win.column(n_t + j), m)
    base = curve_from_points(as_of, tenors, z0, s0, regime)
    pnl = np.array([
        par_swap_pnl(base, curve_from_points(as_of, tenors, scen_z[i], scen_s[i], regime),
                     maturity, direction)
        for i in range(len(scen_z))
    ])
    return pnl, breaches


def swap_report(points: InstrumentPanel, window: tuple, spec: DataModelSpec, cfg: RiskConfig,
                as_of, maturity: float, direction: str = "payer",
                regime: str | None = None) -> RiskReport:
    pnl, breaches = swap_pnl_scenarios(points, window, spec, cfg, as_of, maturity, direction,
                                       regime)
    win = business_day_window(points, *window)
    return report_from_pnl(pnl, cfg, as_of=np.datetime64(as_of, "D"), model_id=spec.model_id,
                           window=(win.dates[0], win.dates[-1]), breaches=breaches)


def trailing_window(dates: np.ndarray, as_of, n: int) -> tuple:
    """The last ``n`` dates up to and including ``as_of``."""
    as_of = np.datetime64(as_of, "D")
    idx = np.flatnonzero(dates <= as_of)
    if len(idx) < n:
        raise InsufficientDataError(f"only {len(idx)} dates up to {as_of}, need {n}")
    return dates[idx[-n]], dates[idx[-1]]


def series_report(x: TimeSeries, window: tuple, spec: DataModelSpec, cfg: RiskConfig,
                  as_of) -> RiskReport:
    """Level-change P&L of a single series, shocks from ``window`` applied at ``as_of``."""
    as_of = np.datetime64(as_of, "D")
    hit = np.flatnonzero(x.dates == as_of)
    if len(hit) == 0:
        raise ValidationError(f"as_of {as_of} is not a series date")
    level = float(x.observed()[hit[0]])
    return svar_report(x, window, spec, MarketState(as_of, level), cfg)
