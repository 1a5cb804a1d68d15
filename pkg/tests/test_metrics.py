import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from histvar.cleaning import CleaningConfig
from histvar.core import MarketState, TimeSeries
from histvar.datamodel import DataModelSpec, LevelFunction
from histvar.errors import InsufficientDataError, ValidationError
from histvar.metrics import (RiskConfig, capital_charge, es, report_from_pnl,
                             rolling_clean_sensitivity, svar_report, var, window_sensitivity)
from histvar.synthetic import business_dates, geometric_walk, random_walk

samples = arrays(float, st.integers(1, 300), elements=st.floats(-1e3, 1e3))


def cdf_scan_var(losses, alpha):
    """Walk the sorted sample until the empirical CDF reaches alpha."""
    xs = sorted(losses)
    n = len(xs)
    for x in xs:
        if sum(1 for y in xs if y <= x) / n >= alpha - 1e-15:
            return x
    return xs[-1]


def integrated_es(losses, beta, steps=200_000):
    """Midpoint rule on the empirical quantile over [beta, 1]."""
    xs = np.sort(losses)
    n = len(xs)
    u = beta + (np.arange(steps) + 0.5) * (1 - beta) / steps
    return float(np.mean(xs[np.ceil(u * n).astype(int) - 1]))


def test_var_examples():
    x = np.arange(1.0, 101.0)
    assert var(x, 0.99) == 99.0
    for a in (0.01, 0.5, 0.975, 0.99):
        assert var(np.full(17, 2.5), a) == 2.5
        assert es(np.full(17, 2.5), a) == 2.5


def test_var_cdf_oracle(rng):
    for _ in range(20):
        x = rng.standard_t(4, 260)
        assert var(x, 0.99) == cdf_scan_var(list(x), 0.99)


def test_es_example():
    assert es(np.arange(1.0, 101.0), 0.975) == pytest.approx(99.2, abs=1e-12)
    assert integrated_es(np.arange(1.0, 101.0), 0.975) == pytest.approx(99.2, abs=1e-6)


def test_es_integration_oracle(rng):
    for n in (37, 250, 260):
        x = rng.normal(size=n)
        for b in (0.9, 0.975, 0.99):
            assert es(x, b) == pytest.approx(integrated_es(x, b), abs=1e-4)


def test_empty():
    with pytest.raises(InsufficientDataError):
        var([], 0.99)
    with pytest.raises(InsufficientDataError):
        es([], 0.975)
    with pytest.raises(ValidationError):
        var([1.0, np.nan], 0.5)


@given(samples, st.floats(0.01, 0.999), st.floats(0.1, 10), st.floats(-100, 100))
def test_equivariance(x, a, scale, shift):
    assert var(scale * x + shift, a) == pytest.approx(scale * var(x, a) + shift, abs=1e-9, rel=1e-12)
    assert es(scale * x + shift, a) == pytest.approx(scale * es(x, a) + shift, abs=1e-8, rel=1e-10)


@given(samples, st.floats(0.01, 0.999))
def test_es_dominates_var(x, b):
    assert es(x, b) >= var(x, b) - 1e-9 * max(1.0, np.abs(x).max())


@given(samples)
def test_es_tends_to_max(x):
    assert es(x, 1 - 1e-9) == pytest.approx(x.max(), abs=1e-9)


@given(arrays(float, 260, elements=st.floats(-10, 10), unique=True),
       st.integers(0, 256), st.floats(0, 1))
def test_var_depends_on_top_order_stats(x, i, u):
    order = np.argsort(x)
    v = var(x, 0.99)                      # rank ceil(257.4) = 258
    y = x.copy()
    lo = x[order[0]] - 1.0
    j = order[i]                          # strictly below the 258th value
    y[j] = lo + u * (x[order[257]] - lo) * 0.999
    assume(y[j] < x[order[257]])
    assert var(y, 0.99) == v


def test_config_validation():
    with pytest.raises(ValidationError):
        RiskConfig(alpha=1.0)
    with pytest.raises(ValidationError):
        RiskConfig(holding_days=10, window_days=11)
    with pytest.raises(ValidationError):
        RiskConfig(loss_sign="sideways")


def test_report_tail_count():
    cfg = RiskConfig()
    r = report_from_pnl(np.arange(-125.0, 125.0), cfg)
    assert r.tail_count == pytest.approx(2.5)
    assert r.var_value == var(np.arange(-124.0, 126.0), 0.99)
    # ES(97.5%) may sit below VAR(99%); only same-level dominance holds
    assert es(-np.arange(-125.0, 125.0), 0.99) >= r.var_value


# --- stressed reports ----------------------------------------------------------

def _window(x):
    return (str(x.dates[0]), str(x.dates[-1]))


def test_svar_zero_vol():
    x = TimeSeries("flat", business_dates(300), np.full(300, 0.04))
    cfg = RiskConfig()
    for kind in ("absolute", "relative"):
        r = svar_report(x, _window(x), DataModelSpec(kind), MarketState("2020-01-02", 0.02), cfg)
        assert r.var_low == r.var_high == 0.0 and r.es_value == 0.0


def test_svar_enumeration_oracle():
    x = geometric_walk(300, 0.01, start=0.03, seed=8)
    cfg = RiskConfig()
    now = 0.02
    v = x.observed()
    scen = [now * (1 + (v[i + 10] - v[i]) / v[i]) for i in range(len(v) - 10)]
    pnl = sorted(s - now for s in scen)
    n = len(pnl)
    r = svar_report(x, _window(x), DataModelSpec("relative"), MarketState("2020-01-02", now), cfg)
    assert r.n_shocks == n == 290
    assert r.var_high == pytest.approx(pnl[math.ceil(0.99 * n) - 1], rel=1e-12)
    assert r.var_low == pytest.approx(pnl[math.ceil(0.01 * n) - 1], rel=1e-12)
    assert r.var_value == pytest.approx(-pnl[n - math.ceil(0.99 * n)], rel=1e-12)


def test_svar_same_level_relative_equals_level_relative():
    x = geometric_walk(300, 0.01, start=0.03, seed=9)
    mean = float(np.mean(x.observed()))
    state = MarketState("2020-01-02", mean)
    fn = LevelFunction(2, (0.01, 0.5, -1.0), domain=(0.0, 0.2))
    cfg = RiskConfig()
    a = svar_report(x, _window(x), DataModelSpec("relative"), state, cfg)
    b = svar_report(x, _window(x), DataModelSpec("level-relative", 10, fn, level_source="window"),
                    state, cfg)
    for f in ("var_low", "var_high", "es_low", "es_high", "var_value", "es_value"):
        assert getattr(a, f) == getattr(b, f)


def test_svar_short_window():
    x = random_walk(200, 1e-4, 0.03)
    with pytest.raises(InsufficientDataError):
        svar_report(x, _window(x), DataModelSpec("absolute"), MarketState("2020-01-02", 0.03),
                    RiskConfig())


# --- capital -------------------------------------------------------------------

def test_capital_examples():
    assert capital_charge(3, 10, "sum") == 13
    assert capital_charge(3, 10, "two-max") == 20
    assert capital_charge(10, 10, "sum") == capital_charge(10, 10, "two-max") == 20
    with pytest.raises(ValidationError):
        capital_charge(-1, 2)
    with pytest.raises(ValidationError):
        capital_charge(1, 2, "max")


def test_capital_grid():
    for v in range(21):
        for s in range(21):
            two, tot = capital_charge(v, s, "two-max"), capital_charge(v, s, "sum")
            assert two >= tot
            assert (two == tot) == (v == s)


# --- clean vs dirty sensitivity -----------------------------------------------

CFG1 = RiskConfig(holding_days=1, window_days=260, loss_sign="losses-positive")


def _walk_with_last_diff(seed, last):
    d = np.random.default_rng(seed).normal(0, 1.0, 259)
    d[-1] = last
    return np.concatenate([[100.0], 100.0 + np.cumsum(d)])


def test_sensitivity_max_only():
    clean = _walk_with_last_diff(5, -10.0)        # largest loss by far
    dirty = clean.copy()
    dirty[-1] -= 5.0                              # makes that loss bigger still
    row = window_sensitivity(dirty, clean, DataModelSpec("absolute", 1), CFG1)
    assert row.var_dirty == row.var_clean == var(-np.diff(clean), 0.99)
    assert row.es_dirty == es(-np.diff(dirty), 0.975)
    assert row.es_change > 0 and row.var_change == 0
    assert row.es_only and row.ratio == row.es_change


def test_sensitivity_at_var_order_stat():
    losses = np.sort(-np.diff(_walk_with_last_diff(6, 0.0)))
    k = math.ceil(0.99 * 259) - 1                 # 0-based VAR rank
    target = (losses[k] + losses[k + 1]) / 2      # between the VAR value and the next one up
    clean = _walk_with_last_diff(6, -target)
    assert var(-np.diff(clean), 0.99) == pytest.approx(target)
    dirty = clean.copy()
    dirty[-1] -= 50.0
    row = window_sensitivity(dirty, clean, DataModelSpec("absolute", 1), CFG1)
    assert row.var_change > 0 and row.es_change > 0
    assert not row.es_only and math.isfinite(row.ratio)
    assert row.var_dirty == var(-np.diff(dirty), 0.99)
    assert row.ratio == pytest.approx(row.es_change / row.var_change)


def test_rolling_clean_series_is_zero():
    x = random_walk(300, 1e-4, 0.03, seed=4)
    cfg = CleaningConfig(rng_seed=1, mc_trials=64)
    rows = rolling_clean_sensitivity(x, cfg, RiskConfig(), method="outliers")
    assert len(rows) == 41
    assert all(r.var_change == 0 and r.es_change == 0 and r.n_cleaned == 0 for r in rows)


def test_sensitivity_rejects_level_relative():
    fn = LevelFunction(1, (1.0, 0.0))
    with pytest.raises(ValidationError):
        window_sensitivity(np.ones(30), np.ones(30),
                           DataModelSpec("level-relative", 1, fn), CFG1)
