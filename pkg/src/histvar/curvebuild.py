"""Zero-curve bootstrapping from deposits, OIS swaps and Libor swaps.

Conventions (deliberately simple and fixed):

* tenors are year fractions; fixed legs pay annually, floating legs
  quarterly, both with a short front stub and accrual equal to the period
  length in years;
* OIS swaps pay the compounded overnight rate, so their floating leg is
  ``1 - D(T)`` on the discount curve;
* the 3M deposit is simple interest, ``P(0.25) = 1 / (1 + 0.25 r)``;
* curves are linear in log discount factor between pillars, anchored at
  ``log D(0) = 0``, with flat-forward extrapolation past the last pillar.

``single-curve`` builds one curve from deposits and Libor swaps.
``multi-curve`` builds the discount curve from OIS swaps and the projection
curve from deposits and Libor swaps discounted on OIS.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .core import Instrument, InstrumentPanel
from .errors import ConvergenceError, OutOfRangeError, ValidationError

REGIMES = ("single-curve", "multi-curve")
FIXED_STEP = 1.0
FLOAT_STEP = 0.25
QUOTE_TOL = 1e-12


def schedule(maturity: float, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Payment times and accruals, rolling back from ``maturity`` by ``step``."""
    times = []
    t = maturity
    while t > 1e-9:
        times.append(t)
        t -= step
    times = np.array(times[::-1])
    starts = np.concatenate(([0.0], times[:-1]))
    return times, times - starts


def _log_df(t, knots_t, knots_l):
    t = np.asarray(t, dtype=float)
    out = np.interp(t, knots_t, knots_l)
    beyond = t > knots_t[-1]
    if np.any(beyond):
        slope = (knots_l[-1] - knots_l[-2]) / (knots_t[-1] - knots_t[-2])
        out = np.where(beyond, knots_l[-1] + slope * (t - knots_t[-1]), out)
    return out


@dataclass(frozen=True, eq=False)
class ZeroCurve:
    as_of: object
    pillars: np.ndarray
    zero_rates: np.ndarray
    role: str = "discount"

    def __post_init__(self):
        p = np.array(self.pillars, dtype=float)
        z = np.array(self.zero_rates, dtype=float)
        if p.ndim != 1 or p.shape != z.shape or len(p) == 0:
            raise ValidationError("pillars and zero rates must be equal-length vectors")
        if np.any(p <= 0) or np.any(np.diff(p) <= 0):
            raise ValidationError("pillars must be positive and strictly increasing")
        df = np.exp(-z * p)
        if np.any(df <= 0) or np.any(df > 2):
            raise ValidationError("discount factors must lie in (0, 2]")
        if self.role not in ("discount", "projection"):
            raise ValidationError("role must be discount or projection")
        p.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "pillars", p)
        object.__setattr__(self, "zero_rates", z)
        object.__setattr__(self, "_knots_t", np.concatenate(([0.0], p)))
        object.__setattr__(self, "_knots_l", np.concatenate(([0.0], -z * p)))

    def log_df(self, t):
        return _log_df(t, self._knots_t, self._knots_l)

    def df(self, t):
        return np.exp(self.log_df(t))

    def zero(self, t):
        t = np.asarray(t, dtype=float)
        return -self.log_df(t) / t

    def with_rates(self, zero_rates) -> "ZeroCurve":
        return ZeroCurve(self.as_of, self.pillars, zero_rates, self.role)


@dataclass(frozen=True, eq=False)
class CurveSet:
    discount: ZeroCurve
    projection: ZeroCurve | None = None
    regime: str = "single-curve"

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValidationError(f"regime must be one of {REGIMES}")
        if (self.projection is not None) != (self.regime == "multi-curve"):
            raise ValidationError("projection curve present exactly in the multi-curve regime")
        if self.projection is not None and self.projection.as_of != self.discount.as_of:
            raise ValidationError("discount and projection curves must share as_of")

    @property
    def proj(self) -> ZeroCurve:
        return self.discount if self.projection is None else self.projection

    @property
    def max_tenor(self) -> float:
        return float(min(self.discount.pillars[-1], self.proj.pillars[-1]))


# ---------------------------------------------------------------------------
# instrument pricing on known curves

def annuity(disc: ZeroCurve, maturity: float) -> float:
    t, tau = schedule(maturity, FIXED_STEP)
    return float(np.sum(tau * disc.df(t)))


def float_leg(disc: ZeroCurve, proj: ZeroCurve, maturity: float) -> float:
    t, _ = schedule(maturity, FLOAT_STEP)
    p = proj.df(np.concatenate(([0.0], t)))
    return float(np.sum((p[:-1] / p[1:] - 1.0) * disc.df(t)))


def ois_par_rate(disc: ZeroCurve, maturity: float) -> float:
    return float((1.0 - disc.df(maturity)) / annuity(disc, maturity))


def swap_par_rate(disc: ZeroCurve, proj: ZeroCurve, maturity: float) -> float:
    return float_leg(disc, proj, maturity) / annuity(disc, maturity)


def deposit_rate(proj: ZeroCurve, maturity: float) -> float:
    return float((1.0 / proj.df(maturity) - 1.0) / maturity)


def reprice(cs: CurveSet, inst: Instrument) -> float:
    """Model quote of ``inst`` on ``cs``."""
    if inst.kind == "OIS":
        return ois_par_rate(cs.discount, inst.tenor)
    if inst.kind == "DEPO":
        return deposit_rate(cs.proj, inst.tenor)
    if inst.kind == "IRS":
        return swap_par_rate(cs.discount, cs.proj, inst.tenor)
    raise ValidationError(f"cannot reprice {inst.id}")


# ---------------------------------------------------------------------------
# bootstrapping

class _PillarSolver:
    """Incremental curve: known knots plus one trial knot at the new pillar."""

    def __init__(self):
        self.t = [0.0]
        self.l = [0.0]

    def trial(self, times, pillar, log_df):
        kt = np.array(self.t + [pillar])
        kl = np.array(self.l + [log_df])
        return np.exp(_log_df(times, kt, kl))

    def accept(self, pillar, log_df):
        self.t.append(pillar)
        self.l.append(log_df)


def _solve(objective, pillar: float, guess_rate: float) -> float:
    """Root of ``objective(log_df)`` expressed via the zero rate at ``pillar``."""
    def f(z):
        return objective(-z * pillar)

    for lo, hi in ((guess_rate - 0.05, guess_rate + 0.05), (-0.25, 0.5), (-1.0, 2.0)):
        flo, fhi = f(lo), f(hi)
        if np.isfinite(flo) and np.isfinite(fhi) and flo * fhi <= 0:
            z = brentq(f, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
            if abs(f(z)) > QUOTE_TOL:
                break
            return -z * pillar
    raise ConvergenceError(f"bootstrap failed at pillar {pillar:g}Y", pillar=pillar)


def _bootstrap_curve(insts, quotes, disc: ZeroCurve | None, as_of, role) -> ZeroCurve:
    """Pillar-by-pillar solve.  ``disc`` None means the curve discounts itself."""
    order = np.argsort([i.tenor for i in insts], kind="mergesort")
    solver = _PillarSolver()
    pillars, logs = [], []
    for k in order:
        inst, q = insts[k], float(quotes[k])
        T = inst.tenor
        if pillars and T <= pillars[-1] + 1e-12:
            raise ValidationError(f"duplicate pillar at {T:g}Y")
        if inst.kind == "DEPO":
            def objective(L, T=T, q=q):
                return (np.exp(-L) - 1.0) / T - q
        elif inst.kind == "OIS" or (inst.kind == "IRS" and disc is None):
            ft, ftau = schedule(T, FIXED_STEP)
            if inst.kind == "OIS":
                def objective(L, T=T, q=q, ft=ft, ftau=ftau):
                    d = solver.trial(ft, T, L)
                    return (1.0 - d[-1]) / np.sum(ftau * d) - q
            else:
                lt, _ = schedule(T, FLOAT_STEP)
                lt0 = np.concatenate(([0.0], lt))

                def objective(L, T=T, q=q, ft=ft, ftau=ftau, lt0=lt0):
                    d = solver.trial(ft, T, L)
                    p = solver.trial(lt0, T, L)
                    flt = np.sum((p[:-1] / p[1:] - 1.0) * p[1:])
                    return flt / np.sum(ftau * d) - q
        elif inst.kind == "IRS":
            ft, ftau = schedule(T, FIXED_STEP)
            lt, _ = schedule(T, FLOAT_STEP)
            lt0 = np.concatenate(([0.0], lt))
            ann = float(np.sum(ftau * disc.df(ft)))
            dflt = disc.df(lt)

            def objective(L, T=T, q=q, lt0=lt0, ann=ann, dflt=dflt):
                p = solver.trial(lt0, T, L)
                return np.sum((p[:-1] / p[1:] - 1.0) * dflt) / ann - q
        else:
            raise ValidationError(f"{inst.id} cannot be bootstrapped")
        L = _solve(objective, T, q)
        solver.accept(T, L)
        pillars.append(T)
        logs.append(L)
    p = np.array(pillars)
    return ZeroCurve(as_of, p, -np.array(logs) / p, role)


def bootstrap(instruments, quotes, regime: str = "single-curve", as_of=None) -> CurveSet:
    """Bootstrap one date's quotes into a :class:`CurveSet`."""
    if regime not in REGIMES:
        raise ValidationError(f"regime must be one of {REGIMES}")
    insts = [i if isinstance(i, Instrument) else Instrument.parse(i) for i in instruments]
    quotes = np.asarray(quotes, dtype=float)
    if quotes.shape != (len(insts),) or not np.all(np.isfinite(quotes)):
        raise ValidationError("bootstrap needs one finite quote per instrument")
    libor = [k for k, i in enumerate(insts) if i.kind in ("DEPO", "IRS")]
    ois = [k for k, i in enumerate(insts) if i.kind == "OIS"]
    if not libor:
        raise ValidationError("no deposit or Libor swap quotes")
    if regime == "single-curve":
        disc = _bootstrap_curve([insts[k] for k in libor], quotes[libor], None, as_of, "discount")
        return CurveSet(disc, None, regime)
    if not ois:
        raise ValidationError("multi-curve regime needs OIS quotes")
    disc = _bootstrap_curve([insts[k] for k in ois], quotes[ois], None, as_of, "discount")
    proj = _bootstrap_curve([insts[k] for k in libor], quotes[libor], disc, as_of, "projection")
    return CurveSet(disc, proj, regime)


def regime_for(date, cutoff="2004-01-01") -> str:
    return "multi-curve" if np.datetime64(date, "D") >= np.datetime64(cutoff, "D") else "single-curve"


def bootstrap_panel(panel: InstrumentPanel, regime: str = "auto",
                    cutoff: str = "2004-01-01") -> list[CurveSet]:
    """Bootstrap every date of a complete rate panel.

    ``regime="auto"`` uses single-curve before ``cutoff`` and multi-curve after.
    """
    if not panel.present.all():
        raise ValidationError("bootstrap_panel needs a complete (cleaned) panel")
    keep = [k for k, i in enumerate(panel.instruments) if i.kind in ("OIS", "DEPO", "IRS")]
    insts = [panel.instruments[k] for k in keep]
    out = []
    for r, d in enumerate(panel.dates):
        reg = regime_for(d, cutoff) if regime == "auto" else regime
        out.append(bootstrap(insts, panel.quotes[r, keep], reg, as_of=d))
    return out


def tenor_rates(cs: CurveSet, tenors) -> tuple[np.ndarray, np.ndarray]:
    """Discount zero rates and projection-minus-discount spreads at ``tenors``."""
    t = np.atleast_1d(np.asarray(tenors, dtype=float))
    if np.any(t <= 0) or np.any(t > cs.max_tenor + 1e-12):
        raise OutOfRangeError(f"tenors must lie in (0, {cs.max_tenor:g}]")
    disc = cs.discount.zero(t)
    if cs.projection is None:
        return disc, np.zeros_like(disc)
    return disc, cs.projection.zero(t) - disc


def par_swap_pnl(base: CurveSet, shocked: CurveSet, maturity: float,
                 direction: str = "payer") -> float:
    """Value per unit notional on ``shocked`` of a swap struck at par on ``base``.

    Payer pays fixed; receiver is its exact negative.
    """
    if direction not in ("payer", "receiver"):
        raise ValidationError("direction must be payer or receiver")
    if not 0 < maturity <= base.max_tenor + 1e-12:
        raise OutOfRangeError(f"maturity {maturity:g} outside (0, {base.max_tenor:g}]")
    strike = swap_par_rate(base.discount, base.proj, maturity)
    value = float_leg(shocked.discount, shocked.proj, maturity) \
        - strike * annuity(shocked.discount, maturity)
    return value if direction == "payer" else -value
