"""``histvar`` command line.

Subcommands: clean, var, analyze-level, lookup, gapscan, sensitivity.

Parameters come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines, then command-line flags.  Every output directory gets
a ``manifest.json`` with the resolved configuration, the input hash and the
hash of every file written, plus a ``config.txt`` that replays the run.

Exit codes: 0 success, 1 validation error, 2 computation error, 3 I/O error.
Failures print one JSON error record to stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import traceback
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io as hio
from .cleaning import CleaningConfig, clean_panel, clean_series
from .core import InstrumentPanel, TimeSeries
from .datamodel import SCHEMA_VERSION, DataModelSpec, LevelFunction
from .errors import ComputationError, HistVarError, ValidationError
from .gapscan import availability_report, percentile_track, stress_gap_fraction
from .levelanalysis import (bucket_sd, build_lookup_table, fit_level_function, level_grid,
                            make_level_function)
from .metrics import RiskConfig, capital_charge, rolling_clean_sensitivity
from .pipeline import prepare_panel, series_report, swap_report, trailing_window

EXIT_OK, EXIT_VALIDATION, EXIT_COMPUTATION, EXIT_IO = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# typed configuration keys

def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list(s: str) -> tuple:
    return tuple(p.strip() for p in s.split(",") if p.strip())


def _floats(s: str) -> tuple:
    return tuple(float(p) for p in _list(s))


def _window(s: str) -> tuple:
    start, sep, end = s.strip().partition(":")
    if not sep:
        raise ValueError(f"window must be start:end, got {s!r}")
    a, b = np.datetime64(start.strip(), "D"), np.datetime64(end.strip(), "D")
    if a > b:
        raise ValueError(f"window start {a} after end {b}")
    return str(a), str(b)


def _windows(s: str) -> tuple:
    out = []
    for part in _list(s):
        name, sep, rng = part.partition("=")
        if not sep or not name.strip():
            raise ValueError(f"stress window must be name=start:end, got {part!r}")
        out.append((name.strip(), *_window(rng)))
    names = [w[0] for w in out]
    if len(set(names)) != len(names):
        raise ValueError("stress window names must be unique")
    return tuple(out)


def _date(s: str) -> str:
    return str(np.datetime64(s.strip(), "D"))


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


def _choice(*options):
    def conv(s: str) -> str:
        v = s.strip()
        if v not in options:
            raise ValueError(f"must be one of {options}, got {v!r}")
        return v
    return conv


def _models(s: str) -> tuple:
    kinds = _list(s)
    for k in kinds:
        if k not in ("absolute", "relative", "level-relative"):
            raise ValueError(f"unknown model {k!r}")
    if not kinds:
        raise ValueError("at least one model is required")
    return kinds


KEYS = {
    # name: (converter, default, help)
    "seed": (int, None, "RNG seed for Monte-Carlo bad-data detection"),
    "trim_fraction": (float, 0.03, "fraction r of largest differences trimmed"),
    "mc_trials": (int, 256, "Monte-Carlo trials for the detection threshold"),
    "threshold_sds": (float, 5.0, "detection threshold in SDs above the null mean"),
    "max_time_gap_days": (int, 2, "longest gap filled linearly in time"),
    "spike_max_width_days": (int, 5, "widest up-then-down run removed"),
    "spike_return_tolerance": (float, 0.10, "relative return tolerance of the spike cleaner"),
    "plateau_tolerance": (float, 0.10, "flatness tolerance of the plateau rule"),
    "method": (_choice("outliers", "spikes", "both"), None, "series cleaning method"),
    "clean": (_bool, True, "clean the input before use"),
    "alpha": (float, 0.99, "VAR confidence"),
    "beta": (float, 0.975, "ES confidence"),
    "holding_days": (int, 10, "holding period m in business days"),
    "window_days": (int, 260, "minimum observations per window"),
    "loss_sign": (_choice("losses-positive", "two-sided"), "two-sided", "tails examined"),
    "floor": (float, 0.0, "scenario level below which a breach is counted"),
    "model": (_models, None, "comma-separated Data Models"),
    "level_fn": (str, None, "JSON file with a level function"),
    "level_source": (_choice("observation", "window"), "observation", "level-relative l_i"),
    "capital_mode": (_choice("sum", "two-max", "twomax"), "sum", "VAR/SVAR aggregation"),
    "window": (_window, None, "window start:end"),
    "stress_window": (_windows, (), "name=start:end[,name=start:end...]"),
    "as_of": (_date, None, "evaluation date (default: last input date)"),
    "maturities": (_floats, None, "swap maturities in years"),
    "direction": (_choice("payer", "receiver"), "payer", "swap direction"),
    "regime": (_choice("auto", "single-curve", "multi-curve"), "auto", "curve regime"),
    "regime_cutoff": (_date, "2004-01-01", "first multi-curve date for regime=auto"),
    "bucket_bp": (float, 25.0, "level bucket width in bp"),
    "degree": (int, 2, "level function degree"),
    "extrapolate": (_choice("flat", "poly", "polynomial"), "flat", "extrapolation mode"),
    "boundary": (_opt_float, None, "flat-extrapolation boundary level"),
    "max_level": (float, 0.20, "highest level checked for positivity"),
    "min_count": (int, 20, "thin-bucket threshold"),
    "weight": (_choice("unweighted", "by-count"), "unweighted", "fit weighting"),
    "target": (_choice("relative", "absolute"), "relative", "SD regressed on level"),
    "columns": (_list, None, "panel columns to use"),
    "grid_lo": (float, 0.0, "lowest lookup level"),
    "grid_hi": (float, 0.10, "highest lookup level"),
    "k": (int, 3, "missing points that make a name gappy"),
    "span": (int, 10, "trailing span in business days"),
    "quantiles": (_floats, (0.5, 0.9), "percentile tracks"),
}

CLEAN_KEYS = ("seed", "trim_fraction", "mc_trials", "threshold_sds", "max_time_gap_days",
              "spike_max_width_days", "spike_return_tolerance", "plateau_tolerance", "method")
RISK_KEYS = ("alpha", "beta", "holding_days", "window_days", "loss_sign", "floor")
MODEL_KEYS = ("model", "level_fn", "level_source")

COMMANDS = {
    "clean": (CLEAN_KEYS, {"method": "outliers"}),
    "var": (CLEAN_KEYS + RISK_KEYS + MODEL_KEYS + (
        "clean", "capital_mode", "window", "stress_window", "as_of", "maturities", "direction",
        "regime", "regime_cutoff"), {"method": "outliers", "model": ("relative",)}),
    "analyze-level": (("holding_days", "bucket_bp", "degree", "extrapolate", "boundary",
                       "max_level", "min_count", "weight", "target", "columns"), {}),
    "lookup": (CLEAN_KEYS + RISK_KEYS + MODEL_KEYS + (
        "clean", "stress_window", "columns", "grid_lo", "grid_hi", "bucket_bp", "regime",
        "regime_cutoff"), {"method": "outliers", "model": ("relative",), "clean": False}),
    "gapscan": (("as_of", "window", "k", "span", "quantiles"), {}),
    "sensitivity": (CLEAN_KEYS + RISK_KEYS + ("model",),
                    {"method": "spikes", "model": ("absolute",)}),
}


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` comments and blank lines ignored."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"{path}: line {n}: expected key = value")
        key = key.strip().replace("-", "_")
        if key in out:
            raise ValidationError(f"{path}: line {n}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def resolve_config(command: str, file_values: dict, flag_values: dict) -> dict:
    """Defaults, then file, then flags; unknown keys and bad values are errors."""
    allowed, overrides = COMMANDS[command]
    unknown = sorted(set(file_values) - set(allowed))
    if unknown:
        raise ValidationError(f"unknown config keys for {command}: {unknown}")
    cfg = {k: overrides.get(k, KEYS[k][1]) for k in allowed}
    for source in (file_values, flag_values):
        for k, raw in source.items():
            if raw is None:
                continue
            try:
                cfg[k] = KEYS[k][0](raw)
            except ValueError as e:
                raise ValidationError(f"config key {k!r}: {e}") from None
    return cfg


def config_text(cfg: dict) -> str:
    """Resolved config as a replayable ``key = value`` file."""
    lines = []
    for k in sorted(cfg):
        v = cfg[k]
        if v is None:
            continue
        if isinstance(v, bool):
            s = "true" if v else "false"
        elif k == "stress_window":
            s = ",".join(f"{n}={a}:{b}" for n, a, b in v)
        elif k == "window":
            s = f"{v[0]}:{v[1]}"
        elif isinstance(v, tuple):
            s = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        if s == "" and k == "stress_window":
            continue
        lines.append(f"{k} = {s}")
    return "\n".join(lines) + "\n"


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.datetime64):
        return str(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, TimeSeries):
        return [[str(d), float(x) if p else None] for d, x, p in zip(v.dates, v.values, v.present)]
    return v


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


# ---------------------------------------------------------------------------
# builders from resolved config

def cleaning_config(cfg: dict, need_seed: bool) -> CleaningConfig:
    if need_seed and cfg.get("seed") is None:
        raise ValidationError("this run uses Monte-Carlo detection: --seed is required")
    return CleaningConfig(
        trim_fraction=cfg["trim_fraction"], mc_trials=cfg["mc_trials"],
        threshold_sds=cfg["threshold_sds"], max_time_gap_days=cfg["max_time_gap_days"],
        spike_max_width_days=cfg["spike_max_width_days"],
        spike_return_tolerance=cfg["spike_return_tolerance"],
        plateau_tolerance=cfg["plateau_tolerance"], rng_seed=cfg.get("seed"))


def risk_config(cfg: dict) -> RiskConfig:
    return RiskConfig(alpha=cfg["alpha"], beta=cfg["beta"], holding_days=cfg["holding_days"],
                      window_days=cfg["window_days"], loss_sign=cfg["loss_sign"],
                      floor=cfg["floor"])


def model_specs(cfg: dict) -> list[DataModelSpec]:
    fn = None
    if cfg.get("level_fn"):
        d = json.loads(Path(cfg["level_fn"]).read_text())
        fn = LevelFunction.from_dict(d.get("level_function", d) if "degree" not in d else d)
    specs = []
    for kind in cfg["model"]:
        if kind == "level-relative":
            if fn is None:
                raise ValidationError("model level-relative needs --level-fn")
            specs.append(DataModelSpec(kind, cfg["holding_days"], fn,
                                       cfg.get("level_source", "observation")))
        else:
            specs.append(DataModelSpec(kind, cfg["holding_days"]))
    return specs


# ---------------------------------------------------------------------------
# commands; each returns {file name: text}

def cmd_clean(data, cfg: dict, meta: dict) -> dict:
    ccfg = cleaning_config(cfg, need_seed=True)
    out = {}
    if isinstance(data, TimeSeries):
        cleaned, log, det = clean_series(data, ccfg, cfg["method"])
        detections = {data.id: det}
        rows = list(hio.series_rows(cleaned))
        out["cleaned.csv"] = _csv(["date", "value"], rows)
    else:
        cleaned, log, detections = clean_panel(data, ccfg)
        out["cleaned.csv"] = _csv(["date"] + cleaned.ids, _panel_rows(cleaned))
    out["changelog.csv"] = log.to_csv()
    out["detections.json"] = dump_json({
        **meta,
        "detections": {k: None if v is None else asdict(v) for k, v in sorted(detections.items())},
        "unfilled": list(log.unfilled),
    })
    return out


def _panel_rows(panel: InstrumentPanel):
    for r, d in enumerate(panel.dates):
        yield [d] + [float(v) if p else None for v, p in zip(panel.quotes[r], panel.present[r])]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([hio.fmt(v) for v in row])
    return buf.getvalue()


REPORT_FIELDS = ("window_id", "window_start", "window_end", "maturity", "model_id", "n_shocks",
                 "var_low", "var_high", "es_low", "es_high", "var_value", "es_value", "breaches")


def cmd_var(data, cfg: dict, meta: dict) -> dict:
    rcfg = risk_config(cfg)
    specs = model_specs(cfg)
    ccfg = cleaning_config(cfg, need_seed=cfg["clean"]) if cfg["clean"] else None
    as_of = np.datetime64(cfg["as_of"] or data.dates[-1], "D")
    current = cfg["window"] or trailing_window(data.dates, as_of, rcfg.window_days)
    windows = [("current", *map(str, current))] + [tuple(w) for w in cfg["stress_window"]]
    rows = []
    if isinstance(data, TimeSeries):
        x = data
        if ccfg is not None:
            x, _, _ = clean_series(data, ccfg, cfg["method"])
        for spec in specs:
            for wid, a, b in windows:
                rep = series_report(x, (a, b), spec, rcfg, as_of)
                rows.append(_row(wid, rep, "level"))
    else:
        prep = prepare_panel(data, ccfg, cfg["regime"], cfg["regime_cutoff"])
        regime = None if cfg["regime"] == "auto" else cfg["regime"]
        mats = cfg["maturities"] or tuple(t for t in prep.tenors if t >= 1.0)
        for spec in specs:
            for wid, a, b in windows:
                for mat in mats:
                    rep = swap_report(prep.points, (a, b), spec, rcfg, as_of, mat,
                                      cfg["direction"], regime)
                    rows.append(_row(wid, rep, mat))
    capital = []
    if len(windows) > 1:
        keys = []
        for r in rows:
            if (r["model_id"], r["maturity"]) not in keys:
                keys.append((r["model_id"], r["maturity"]))
        for model_id, mat in keys:
            sel = [r for r in rows if r["model_id"] == model_id and r["maturity"] == mat]
            cur = next(r for r in sel if r["window_id"] == "current")
            stressed = max((r for r in sel if r["window_id"] != "current"),
                           key=lambda r: (r["var_value"], r["window_id"]))
            v, s = max(cur["var_value"], 0.0), max(stressed["var_value"], 0.0)
            capital.append({"model_id": model_id, "maturity": cur["maturity"], "var": v,
                            "svar": s, "svar_window": stressed["window_id"],
                            "capital_mode": cfg["capital_mode"],
                            "capital": capital_charge(v, s, cfg["capital_mode"])})
    return {
        "report.csv": _csv(REPORT_FIELDS, ([r[k] for k in REPORT_FIELDS] for r in rows)),
        "capital.csv": _csv(["model_id", "maturity", "var", "svar", "svar_window",
                             "capital_mode", "capital"],
                            ([c[k] for k in ("model_id", "maturity", "var", "svar",
                                             "svar_window", "capital_mode", "capital")]
                             for c in capital)),
        "report.json": dump_json({**meta, "rows": rows, "capital": capital}),
    }


def _row(wid, rep, maturity) -> dict:
    d = rep.to_dict()
    return {"window_id": wid, "window_start": d["window"][0], "window_end": d["window"][1],
            "maturity": maturity, "model_id": d["model_id"], "n_shocks": d["n_shocks"],
            **{k: d[k] for k in ("var_low", "var_high", "es_low", "es_high", "var_value",
                                 "es_value", "breaches")}}


def _select_series(data, columns) -> list[TimeSeries]:
    if isinstance(data, TimeSeries):
        return [data]
    ids = columns or data.ids
    return [data.column(c) for c in ids]


def cmd_analyze_level(data, cfg: dict, meta: dict) -> dict:
    series = _select_series(data, cfg["columns"])
    buckets = bucket_sd(series, cfg["holding_days"], cfg["bucket_bp"], cfg["min_count"])
    fit = fit_level_function(buckets, cfg["degree"], cfg["weight"], cfg["target"])
    mode = "polynomial" if cfg["extrapolate"] in ("poly", "polynomial") else "flat"
    fn = make_level_function(fit, mode, cfg["boundary"], cfg["max_level"])
    grid = np.linspace(0.0, cfg["max_level"], 101)
    plot = [("bucket", b.median_level, b.sd_relative if cfg["target"] == "relative"
             else b.sd_absolute) for b in buckets if not b.thin]
    plot += [("fit", float(g), float(fn(g))) for g in grid]
    fields = ("bucket_lo", "bucket_hi", "median_level", "sd_relative", "sd_absolute", "count",
              "thin")
    return {
        "buckets.csv": _csv(fields, ([getattr(b, f) for f in fields] for b in buckets)),
        "fit.json": dump_json({**meta, "fit": fit.to_dict(), "level_function": fn.to_dict()}),
        "level_function.json": dump_json(fn.to_dict()),
        "plot.csv": _csv(["series", "level", "sd"], plot),
    }


def cmd_lookup(data, cfg: dict, meta: dict) -> dict:
    rcfg = risk_config(cfg)
    specs = model_specs(cfg)
    if not cfg["stress_window"]:
        raise ValidationError("lookup needs at least one --stress-window")
    if isinstance(data, TimeSeries):
        source = {data.id: data}
        tenors = [data.id]
    else:
        rate = any(i.kind in ("OIS", "DEPO", "IRS") for i in data.instruments)
        if rate:
            ccfg = cleaning_config(cfg, need_seed=True) if cfg["clean"] else None
            data = prepare_panel(data, ccfg, cfg["regime"], cfg["regime_cutoff"]).points
        tenors = list(cfg["columns"] or [i for i in data.ids if i.startswith("ZERO:")] or data.ids)
        source = data
    grid = level_grid(cfg["grid_lo"], cfg["grid_hi"], cfg["bucket_bp"])
    out = {}
    for name, a, b in cfg["stress_window"]:
        table = build_lookup_table(source, (a, b), specs, grid, tenors, rcfg, window_id=name)
        d = table.to_dict()
        d.update(meta)
        out[f"lookup_{name}.json"] = dump_json(d)
        out[f"lookup_{name}.csv"] = table.to_csv()
    return out


def cmd_gapscan(data, cfg: dict, meta: dict) -> dict:
    if not isinstance(data, InstrumentPanel):
        raise ValidationError("gapscan needs a panel input")
    if cfg["window"] is None:
        raise ValidationError("gapscan needs --window")
    as_of = cfg["as_of"] or str(data.dates[-1])
    rep = availability_report(data, as_of, cfg["window"])
    track = stress_gap_fraction(data, cfg["window"], cfg["k"], cfg["span"], as_of)
    tracks = [percentile_track(data, q) for q in cfg["quantiles"]]
    prows = []
    for r, d in enumerate(data.dates):
        prows.append([d] + [float(t.values[r]) if t.present[r] else None for t in tracks])
    report = asdict(rep)
    report["pct_with_k_gaps_in_span"] = None
    return {
        "report.json": dump_json({**meta, "report": report}),
        "gaps.csv": _csv(["date", "value"], hio.series_rows(track)),
        "percentiles.csv": _csv(["date"] + [f"q{q!r}" for q in cfg["quantiles"]], prows),
    }


def cmd_sensitivity(data, cfg: dict, meta: dict) -> dict:
    if not isinstance(data, TimeSeries):
        raise ValidationError("sensitivity needs a date,value series")
    ccfg = cleaning_config(cfg, need_seed=cfg["method"] != "spikes")
    rcfg = risk_config(cfg)
    kinds = cfg["model"]
    if len(kinds) != 1:
        raise ValidationError("sensitivity takes exactly one model")
    spec = DataModelSpec(kinds[0], rcfg.holding_days)
    rows = rolling_clean_sensitivity(data, ccfg, rcfg, method=cfg["method"], spec=spec)
    fields = ("date", "var_dirty", "var_clean", "es_dirty", "es_clean", "var_change",
              "es_change", "ratio", "es_only", "n_cleaned")
    return {"sensitivity.csv": _csv(fields, ([getattr(r, f) for f in fields] for r in rows))}


HANDLERS = {
    "clean": cmd_clean,
    "var": cmd_var,
    "analyze-level": cmd_analyze_level,
    "lookup": cmd_lookup,
    "gapscan": cmd_gapscan,
    "sensitivity": cmd_sensitivity,
}


# ---------------------------------------------------------------------------
# entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"usage: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="histvar", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (keys, _) in COMMANDS.items():
        sp = sub.add_parser(name, help=HANDLERS[name].__name__)
        sp.add_argument("input", help="input CSV (series or panel)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--config", help="key = value configuration file")
        for k in keys:
            sp.add_argument("--" + k.replace("_", "-"), dest=k, default=None,
                            help=KEYS[k][2])
    return p


def run(argv) -> int:
    args = build_parser().parse_args(argv)
    file_values = read_config_file(args.config) if args.config else {}
    keys = COMMANDS[args.command][0]
    flags = {k: getattr(args, k) for k in keys}
    cfg = resolve_config(args.command, file_values, flags)
    data = hio.read_input(args.input)
    input_hash = hio.file_hash(args.input)
    meta = {"schema_version": SCHEMA_VERSION, "command": args.command,
            "config": cfg, "input_sha256": input_hash}
    files = HANDLERS[args.command](data, cfg, meta)
    files["config.txt"] = config_text(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in sorted(files):
        (out / name).write_text(files[name])
    manifest = {
        **meta,
        "input": Path(args.input).name,
        "outputs": {n: hashlib.sha256(files[n].encode()).hexdigest() for n in sorted(files)},
    }
    (out / "manifest.json").write_text(dump_json(manifest))
    return EXIT_OK


def _error_record(exc: BaseException, code: int) -> str:
    # innermost frame inside this package names the failing module
    here = Path(__file__).parent
    frames = [f for f in traceback.extract_tb(exc.__traceback__)
              if Path(f.filename).parent == here]
    origin = Path(frames[-1].filename).stem if frames else None
    rec = {"schema_version": SCHEMA_VERSION, "error": type(exc).__name__, "exit_code": code,
           "message": str(exc), "module": origin}
    for attr in ("row", "column", "pillar", "level"):
        if getattr(exc, attr, None) is not None:
            rec[attr] = _jsonable(getattr(exc, attr))
    return json.dumps(rec, sort_keys=True, default=str)


def main(argv=None) -> int:
    try:
        return run(sys.argv[1:] if argv is None else argv)
    except ValidationError as e:
        code = EXIT_VALIDATION
        err = e
    except (ComputationError, HistVarError) as e:
        code = EXIT_COMPUTATION
        err = e
    except OSError as e:
        code = EXIT_IO
        err = e
    print(_error_record(err, code), file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
