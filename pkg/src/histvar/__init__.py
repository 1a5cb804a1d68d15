"""Historical VAR and ES with explicit Data Models, market-data cleaning,
curve bootstrapping and level-dependence analysis."""
from .core import (BP, Instrument, InstrumentPanel, MarketState, ShockDistribution, TimeSeries,
                   business_day_window, validate_series)
from .cleaning import CleaningConfig, ChangeLog, clean_panel, clean_series
from .curvebuild import CurveSet, ZeroCurve, bootstrap, par_swap_pnl, tenor_rates
from .datamodel import DataModelSpec, LevelFunction, apply_shocks, build_distribution
from .metrics import RiskConfig, RiskReport, capital_charge, es, svar_report, var
from .levelanalysis import (FitResult, LevelBucket, LookupTable, bucket_sd, build_lookup_table,
                            fit_level_function, make_level_function, ratio_curve)
from .gapscan import GapReport, availability_report, percentile_track, stress_gap_fraction

__version__ = "0.1.0"

__all__ = [
    "BP", "Instrument", "InstrumentPanel", "MarketState", "ShockDistribution", "TimeSeries",
    "business_day_window", "validate_series", "CleaningConfig", "ChangeLog", "clean_panel",
    "clean_series", "CurveSet", "ZeroCurve", "bootstrap", "par_swap_pnl", "tenor_rates",
    "DataModelSpec", "LevelFunction", "apply_shocks", "build_distribution", "RiskConfig",
    "RiskReport", "capital_charge", "es", "svar_report", "var", "FitResult", "LevelBucket",
    "LookupTable", "bucket_sd", "build_lookup_table", "fit_level_function",
    "make_level_function", "ratio_curve", "GapReport", "availability_report",
    "percentile_track", "stress_gap_fraction",
]
