import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from histvar.core import Instrument
from histvar.curvebuild import (CurveSet, ZeroCurve, bootstrap, bootstrap_panel, par_swap_pnl,
                                reprice, schedule, tenor_rates)
from histvar.errors import ConvergenceError, OutOfRangeError, ValidationError
from histvar.synthetic import rate_panel

TENORS = (1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0)


def libor(quotes, depo=None):
    insts = [Instrument("IRS", t) for t in TENORS]
    q = list(quotes)
    if depo is not None:
        insts = [Instrument("DEPO", 0.25)] + insts
        q = [depo] + q
    return insts, q


def ois(quotes):
    return [Instrument("OIS", t) for t in (0.25,) + TENORS], list(quotes)


def round_trip_error(cs, insts, quotes):
    return max(abs(reprice(cs, i) - q) / abs(q) for i, q in zip(insts, quotes))


def test_flat_par_gives_flat_zero():
    insts, q = libor([0.02] * len(TENORS))
    cs = bootstrap(insts, q, "single-curve")
    assert np.allclose(cs.discount.zero_rates, math.log(1.02), rtol=0, atol=1e-12)
    assert round_trip_error(cs, insts, q) < 1e-10


def test_upward_sloping_round_trip():
    par = [0.01 + 0.002 * math.log1p(t) for t in TENORS]
    insts, q = libor(par, depo=0.009)
    oi, oq = ois([0.008] + [p - 0.0015 for p in par])
    cs = bootstrap(insts + oi, q + oq, "multi-curve")
    assert round_trip_error(cs, insts + oi, q + oq) < 1e-10
    single = bootstrap(insts, q, "single-curve")
    assert round_trip_error(single, insts, q) < 1e-10


def test_zero_spread_case_and_regime_continuity():
    par = [0.015 + 0.001 * t ** 0.5 for t in TENORS]
    insts, q = libor(par, depo=0.014)
    oi, oq = ois([0.014] + par)
    multi = bootstrap(insts + oi, q + oq, "multi-curve")
    single = bootstrap(insts, q, "single-curve")
    assert np.array_equal(multi.discount.pillars, single.discount.pillars)
    assert np.max(np.abs(multi.discount.zero_rates - single.discount.zero_rates)) < 1e-12
    _, spread = tenor_rates(multi, multi.discount.pillars)
    assert np.max(np.abs(spread)) < 1e-12


def test_tenor_rates_flat_and_single_curve():
    insts, q = libor([0.02] * len(TENORS), depo=0.02)
    cs = bootstrap(insts, q, "single-curve")
    disc, spread = tenor_rates(cs, [0.25, 2, 10, 30])
    assert np.all(spread == 0.0)
    assert np.all((disc > 0.0195) & (disc < 0.0201))


def test_tenor_rates_spread_about_twenty_bp():
    insts, q = libor([0.022] * len(TENORS))
    oi, oq = [Instrument("OIS", t) for t in TENORS], [0.02] * len(TENORS)
    cs = bootstrap(insts + oi, q + oq, "multi-curve")
    grid = [1, 2, 5, 10, 30]
    disc, spread = tenor_rates(cs, grid)
    # flat OIS at 2% annual par is flat at ln(1.02); a flat projection rate z_p then
    # prices every quarterly-float swap at (e^{z_p/4} - 1) * sum_{i<4} e^{z_d i/4}
    z_d = math.log(1.02)
    ratio = sum(math.exp(z_d * i / 4) for i in range(4))
    z_p = 4 * math.log1p(0.022 / ratio)
    assert np.allclose(disc, z_d, rtol=0, atol=1e-12)
    assert np.allclose(spread, z_p - z_d, rtol=0, atol=1e-11)
    assert np.allclose(spread, 0.002, atol=5e-5)


def test_tenor_out_of_range():
    insts, q = libor([0.02] * len(TENORS))
    cs = bootstrap(insts, q)
    with pytest.raises(OutOfRangeError):
        tenor_rates(cs, [40.0])
    with pytest.raises(OutOfRangeError):
        par_swap_pnl(cs, cs, 31.0)


def test_convergence_error_names_pillar():
    insts = [Instrument("IRS", 1.0), Instrument("IRS", 2.0)]
    with pytest.raises(ConvergenceError) as e:
        bootstrap(insts, [0.02, 50.0])
    assert e.value.pillar == 2.0


def cashflow_value(disc, proj, strike, maturity):
    # independent summation: annual fixed coupons, quarterly forwards from projection DFs
    fixed = 0.0
    t = maturity
    while t > 1e-9:
        fixed += min(1.0, t) * strike * disc(t)
        t -= 1.0
    floating = 0.0
    t = maturity
    while t > 1e-9:
        s = max(t - 0.25, 0.0)
        fwd = (proj(s) / proj(t) - 1.0)
        floating += fwd * disc(t)
        t -= 0.25
    return floating - fixed


def test_parallel_shock_pnl_vs_cash_flows():
    insts, q = libor([0.02] * len(TENORS))
    base = bootstrap(insts, q)
    shocked = CurveSet(base.discount.with_rates(base.discount.zero_rates + 1e-4))
    pnl = par_swap_pnl(base, shocked, 10.0, "payer")
    strike = reprice(base, Instrument("IRS", 10.0))
    df = lambda c: (lambda t: float(c.df(t)))
    oracle = cashflow_value(df(shocked.discount), df(shocked.discount), strike, 10.0)
    assert pnl == pytest.approx(oracle, rel=1e-12)
    t, tau = schedule(10.0, 1.0)
    annuity = float(np.sum(tau * base.discount.df(t)))
    assert pnl == pytest.approx(annuity * 1e-4, rel=0.02)


def test_pnl_identity_and_antisymmetry():
    p = rate_panel(3, seed=1)
    cs = bootstrap_panel(p, "multi-curve")
    assert par_swap_pnl(cs[0], cs[0], 7.5) == 0.0
    for mat in (1.0, 5.0, 12.5):
        pay = par_swap_pnl(cs[0], cs[2], mat, "payer")
        assert par_swap_pnl(cs[0], cs[2], mat, "receiver") == -pay


@given(st.floats(-0.005, 0.005), st.floats(0.0001, 0.005))
def test_pnl_monotone_in_parallel_shock(shift, extra):
    insts, q = libor([0.03] * len(TENORS))
    base = bootstrap(insts, q)
    z = base.discount.zero_rates
    lo = CurveSet(base.discount.with_rates(z + shift))
    hi = CurveSet(base.discount.with_rates(z + shift + extra))
    assert par_swap_pnl(base, hi, 10.0) > par_swap_pnl(base, lo, 10.0)


def test_panel_round_trip_all_dates():
    p = rate_panel(20, seed=7)
    for r, cs in enumerate(bootstrap_panel(p, "multi-curve")):
        assert round_trip_error(cs, p.instruments, p.quotes[r]) < 1e-10


def test_curve_invariants():
    with pytest.raises(ValidationError):
        ZeroCurve(None, [1.0, 1.0], [0.01, 0.01])
    with pytest.raises(ValidationError):
        ZeroCurve(None, [1.0], [-1.0])          # df = e > 2
    d = ZeroCurve(None, [1.0], [0.01])
    with pytest.raises(ValidationError):
        CurveSet(d, None, "multi-curve")
    with pytest.raises(ValidationError):
        CurveSet(d, ZeroCurve("2024-01-02", [1.0], [0.01], "projection"), "multi-curve")


def test_interpolation_is_log_linear_with_flat_forward_tail():
    c = ZeroCurve(None, [1.0, 2.0], [0.01, 0.02])
    assert float(c.log_df(1.5)) == pytest.approx(0.5 * (-0.01 - 0.04))
    fwd = -(float(c.log_df(3.0)) - float(c.log_df(2.0)))
    assert fwd == pytest.approx(0.03)
