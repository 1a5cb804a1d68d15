"""Seeded synthetic market data for tests, examples and benchmarks."""
from __future__ import annotations

import numpy as np

from .core import Instrument, InstrumentPanel, TimeSeries


def business_dates(n: int, start: str = "2000-01-03") -> np.ndarray:
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return np.busday_offset(first, np.arange(n), roll="forward")


def random_walk(n: int, sigma: float, start: float = 0.0, seed: int = 0,
                start_date: str = "2000-01-03", id: str = "walk") -> TimeSeries:
    """Arithmetic walk with Gaussian increments of SD ``sigma``."""
    rng = np.random.default_rng(seed)
    steps = rng.normal(0.0, sigma, n - 1)
    x = start + np.concatenate([[0.0], np.cumsum(steps)])
    return TimeSeries(id, business_dates(n, start_date), x)


def geometric_walk(n: int, rel_sigma: float, start: float = 0.05, seed: int = 0,
                   start_date: str = "2000-01-03", id: str = "geo") -> TimeSeries:
    """Log-normal walk: log increments of SD ``rel_sigma``."""
    rng = np.random.default_rng(seed)
    steps = rng.normal(0.0, rel_sigma, n - 1)
    x = start * np.exp(np.concatenate([[0.0], np.cumsum(steps)]))
    return TimeSeries(id, business_dates(n, start_date), x)


def level_dependent_moves(n: int, coeffs, lo: float = 0.0, hi: float = 0.15, seed: int = 0):
    """Independent (start, end) pairs with relative move SD ``a + b l + c l**2``."""
    a, b, c = coeffs
    rng = np.random.default_rng(seed)
    start = rng.uniform(lo, hi, n)
    sd = a + start * (b + start * c)
    end = start * (1.0 + sd * rng.standard_normal(n))
    return start, end


def rate_panel(n: int, seed: int = 0, start_date: str = "2005-01-03",
               tenors=(1.0, 2.0, 5.0, 10.0, 30.0), level: float = 0.03,
               spread_bp: float = 15.0, rel_vol: float = 0.01, ois: bool = True) -> InstrumentPanel:
    """OIS / 3M deposit / Libor swap quotes driven by a level and a slope factor."""
    rng = np.random.default_rng(seed)
    lvl = level * np.exp(np.cumsum(np.concatenate([[0.0], rng.normal(0, rel_vol, n - 1)])))
    slope = 0.01 + np.cumsum(np.concatenate([[0.0], rng.normal(0, 2e-4, n - 1)]))
    spread = spread_bp * 1e-4 * np.exp(np.cumsum(np.concatenate([[0.0],
                                                                 rng.normal(0, 0.02, n - 1)])))
    grid = (0.25,) + tuple(tenors)

    def curve(t):
        return lvl + slope * (1.0 - np.exp(-t / 3.0))

    insts, cols = [], []
    if ois:
        for t in grid:
            insts.append(Instrument("OIS", t))
            cols.append(curve(t) - spread)
    insts.append(Instrument("DEPO", 0.25))
    cols.append(curve(0.25))
    for t in tenors:
        insts.append(Instrument("IRS", t))
        cols.append(curve(t))
    return InstrumentPanel(business_dates(n, start_date), insts, np.column_stack(cols))


def gappy_panel(n_names: int, n_days: int, seed: int = 0, p_gap: float = 0.05,
                p_late: float = 0.2, start_date: str = "2007-01-01") -> InstrumentPanel:
    """Spread panel with random gaps and some names starting late."""
    rng = np.random.default_rng(seed)
    quotes = 0.01 * np.exp(rng.normal(0, 0.3, (n_days, n_names)))
    present = rng.random((n_days, n_names)) >= p_gap
    for j in range(n_names):
        if rng.random() < p_late:
            present[: rng.integers(1, n_days), j] = False
    names = [f"CDS:N{j:03d}" for j in range(n_names)]
    return InstrumentPanel(business_dates(n_days, start_date), names, quotes, present)

