"""Historical VAR / ES, stressed reports, clean-vs-dirty sensitivity and the
two capital aggregation rules."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .cleaning import CleaningConfig, clean_series
from .core import MarketState, TimeSeries, order_stat_rank, series_window
from .datamodel import (DataModelSpec, apply_shocks, build_distribution, diffs_absolute,
                        diffs_relative)
from .errors import InsufficientDataError, ValidationError

LOSS_SIGNS = ("losses-positive", "two-sided")
CAPITAL_MODES = ("sum", "two-max")
VAR_EPSILON = 1e-12


@dataclass(frozen=True)
class RiskConfig:
    alpha: float = 0.99
    beta: float = 0.975
    holding_days: int = 10
    window_days: int = 260
    loss_sign: str = "two-sided"
    floor: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValidationError(f"{name} must lie in (0, 1)")
        if self.holding_days < 1:
            raise ValidationError("holding_days must be >= 1")
        if self.window_days < self.holding_days + 2:
            raise ValidationError("window_days must be >= holding_days + 2")
        if self.loss_sign not in LOSS_SIGNS:
            raise ValidationError(f"loss_sign must be one of {LOSS_SIGNS}")


def _sample(losses) -> np.ndarray:
    x = np.asarray(losses, dtype=float).ravel()
    if x.size == 0:
        raise InsufficientDataError("empty loss sample")
    if not np.all(np.isfinite(x)):
        raise ValidationError("loss sample contains non-finite values")
    return x


def var(losses, alpha: float) -> float:
    """Smallest sample value whose empirical CDF reaches ``alpha``."""
    x = np.sort(_sample(losses))
    return float(x[order_stat_rank(len(x), alpha) - 1])


def es(losses, beta: float) -> float:
    """Tail expectation ``1/(1-beta) * integral_beta^1 VAR(u) du`` of the
    empirical distribution.

    With ``k = (1 - beta) n`` this is the sum of the ``floor(k)`` largest
    losses plus ``k - floor(k)`` times the next one, divided by ``k``.
    """
    x = np.sort(_sample(losses))[::-1]
    n = len(x)
    k = (1.0 - beta) * n
    whole = min(int(math.floor(k)), n)
    frac = k - whole
    total = math.fsum(x[:whole])
    if frac > 0 and whole < n:
        total += frac * x[whole]
    return float(total / k)


@dataclass(frozen=True)
class RiskReport:
    """Both tails of a P&L distribution.

    ``var_low`` / ``var_high`` are the (1 - alpha) and alpha quantiles of P&L,
    ``es_low`` / ``es_high`` the beta tail means on each side, and
    ``var_value`` / ``es_value`` the same metrics on losses (= -P&L).
    """

    as_of: np.datetime64 | None
    model_id: str
    window: tuple
    n_shocks: int
    var_low: float
    var_high: float
    es_low: float
    es_high: float
    var_value: float
    es_value: float
    tail_count: float
    breaches: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["as_of"] = None if self.as_of is None else str(self.as_of)
        d["window"] = [None if w is None else str(w) for w in self.window]
        return d


def report_from_pnl(pnl, cfg: RiskConfig, *, as_of=None, model_id="", window=(None, None),
                    breaches: int = 0) -> RiskReport:
    p = _sample(pnl)
    return RiskReport(
        as_of=as_of,
        model_id=model_id,
        window=tuple(window),
        n_shocks=len(p),
        var_low=var(p, 1.0 - cfg.alpha),
        var_high=var(p, cfg.alpha),
        es_low=-es(-p, cfg.beta),
        es_high=es(p, cfg.beta),
        var_value=var(-p, cfg.alpha),
        es_value=es(-p, cfg.beta),
        tail_count=(1.0 - cfg.alpha) * len(p),
        breaches=breaches,
    )


def svar_report(x: TimeSeries, stress_window: tuple, spec: DataModelSpec, state_use: MarketState,
                cfg: RiskConfig, *, state_obs: MarketState | None = None, pnl_fn=None) -> RiskReport:
    """Stressed report: shocks from ``stress_window`` applied at ``state_use``.

    P&L is the level change ``scenario - current`` unless ``pnl_fn`` maps the
    scenario levels to P&L (e.g. swap repricing).  ``state_obs`` defaults to
    the window's mean level, used only by window-level Data Models.
    """
    window = series_window(x, *stress_window)
    if len(window) < cfg.window_days:
        raise InsufficientDataError(
            f"stress window has {len(window)} observations, need {cfg.window_days}")
    if state_obs is None:
        state_obs = MarketState(window.dates[-1], float(np.mean(window.observed())),
                                window.dates[0])
    dist = build_distribution(window, spec, state_obs, state_use)
    scen = apply_shocks(state_use.level, dist, cfg.floor)
    if pnl_fn is None:
        pnl = scen.values - state_use.level
    else:
        pnl = pnl_fn(scen.values)
    return report_from_pnl(pnl, cfg, as_of=state_use.as_of, model_id=spec.model_id,
                           window=(window.dates[0], window.dates[-1]), breaches=scen.breaches)


def capital_charge(var_value: float, svar_value: float, mode: str = "sum") -> float:
    """``sum``: VAR + SVAR.  ``two-max``: 2 * max(VAR, SVAR)."""
    if var_value < 0 or svar_value < 0:
        raise ValidationError("capital inputs must be non-negative")
    mode = "two-max" if mode in ("twomax", "two-max", "2max") else mode
    if mode == "sum":
        return var_value + svar_value
    if mode == "two-max":
        return 2.0 * max(var_value, svar_value)
    raise ValidationError(f"capital mode must be one of {CAPITAL_MODES}")


def relative_change(clean: float, dirty: float) -> float:
    if dirty == 0:
        return 0.0 if clean == 0 else math.inf
    return abs(clean - dirty) / abs(dirty)


@dataclass(frozen=True)
class SensitivityRow:
    date: np.datetime64
    var_dirty: float
    var_clean: float
    es_dirty: float
    es_clean: float
    var_change: float
    es_change: float
    ratio: float
    es_only: bool
    n_cleaned: int


def _tail_metrics(shocks: np.ndarray, cfg: RiskConfig) -> list[tuple[float, float]]:
    # (VAR, ES) per examined tail; losses-positive looks at falls only
    tails = [(var(-shocks, cfg.alpha), es(-shocks, cfg.beta))]
    if cfg.loss_sign == "two-sided":
        tails.append((var(shocks, cfg.alpha), es(shocks, cfg.beta)))
    return tails


def window_sensitivity(raw: np.ndarray, clean: np.ndarray, spec: DataModelSpec,
                       cfg: RiskConfig, date=None, n_cleaned: int = 0) -> SensitivityRow:
    """Compare VAR/ES on dirty vs cleaned shocks of one window.

    With two tails the tail with the larger ES change is reported.
    """
    if spec.kind == "level-relative":
        raise ValidationError("cleaning sensitivity supports absolute and relative models")
    diff = diffs_absolute if spec.kind == "absolute" else diffs_relative
    m = spec.holding_days
    dirty_t = _tail_metrics(diff(raw, m), cfg)
    clean_t = _tail_metrics(diff(clean, m), cfg)
    best = None
    for (vd, ed), (vc, ec) in zip(dirty_t, clean_t):
        vch, ech = relative_change(vc, vd), relative_change(ec, ed)
        key = (ech, vch)
        if best is None or key > best[0]:
            best = (key, vd, vc, ed, ec, vch, ech)
    _, vd, vc, ed, ec, vch, ech = best
    es_only = vch < VAR_EPSILON
    ratio = ech if es_only else ech / vch
    return SensitivityRow(date, vd, vc, ed, ec, vch, ech, ratio, es_only, n_cleaned)


def rolling_clean_sensitivity(raw: TimeSeries, cfg_clean: CleaningConfig, cfg_risk: RiskConfig,
                              *, method: str = "spikes",
                              spec: DataModelSpec | None = None) -> list[SensitivityRow]:
    """Relative effect of cleaning on VAR(alpha) and ES(beta) over rolling windows
    of ``cfg_risk.window_days`` observations, one row per window end date.

    ``ratio`` is ES change / VAR change, or the ES change alone when the VAR
    change is below 1e-12.
    """
    x = raw.observed()
    w = cfg_risk.window_days
    if len(x) < w:
        raise InsufficientDataError(f"series shorter than the {w}-day window")
    if spec is None:
        spec = DataModelSpec("absolute", cfg_risk.holding_days)
    rows = []
    for end in range(w - 1, len(x)):
        sl = slice(end - w + 1, end + 1)
        win = TimeSeries(raw.id, raw.dates[sl], x[sl])
        cleaned, changes, _ = clean_series(win, cfg_clean, method)
        rows.append(window_sensitivity(x[sl], cleaned.observed(), spec, cfg_risk,
                                       raw.dates[end], len(changes)))
    return rows
