import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from histvar import io as hio
from histvar.cli import main, read_config_file, resolve_config
from histvar.core import TimeSeries
from histvar.errors import ValidationError
from histvar.synthetic import business_dates, gappy_panel, geometric_walk, random_walk, rate_panel


def write(path, obj):
    if isinstance(obj, TimeSeries):
        hio.write_series(path, obj)
    else:
        hio.write_panel(path, obj)
    return str(path)


def run_ok(*argv):
    code = main([str(a) for a in argv])
    assert code == 0
    return code


def run_err(capsys, *argv):
    code = main([str(a) for a in argv])
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["exit_code"] == code
    return code, rec


def outputs(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


# --- io ------------------------------------------------------------------------

def test_round_trip(tmp_path, rng):
    ts = TimeSeries("s", business_dates(30), rng.normal(size=30),
                    rng.random(30) > 0.2)
    back = hio.read_series(write(tmp_path / "s.csv", ts))
    assert np.array_equal(back.present, ts.present)
    assert np.array_equal(back.values[ts.present], ts.values[ts.present])
    p = gappy_panel(5, 40, seed=1)
    q = hio.read_panel(write(tmp_path / "p.csv", p))
    assert q.ids == p.ids
    assert np.array_equal(q.quotes[p.present], p.quotes[p.present])


@pytest.mark.parametrize("text,row,col", [
    ("date,value\n2020-01-02,0.1\n2020-13-01,0.2\n", 3, "date"),
    ("date,value\n2020-01-02,abc\n", 2, "value"),
    ("date,value\n2020-01-02,0.1,9\n", 2, None),
    ("when,value\n2020-01-02,0.1\n", 1, "when"),
])
def test_parse_errors_locate(tmp_path, text, row, col):
    f = tmp_path / "bad.csv"
    f.write_text(text)
    with pytest.raises(hio.CsvParseError) as e:
        hio.read_input(f)
    assert e.value.row == row and e.value.column == col


def test_config_file_and_precedence(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("# risk\nalpha = 0.95\nholding_days=5\n\n")
    vals = read_config_file(f)
    cfg = resolve_config("var", vals, {"alpha": "0.9", "beta": None})
    assert cfg["alpha"] == 0.9 and cfg["holding_days"] == 5 and cfg["beta"] == 0.975
    with pytest.raises(ValidationError):
        resolve_config("var", {"nonsense": "1"}, {})
    with pytest.raises(ValidationError):
        resolve_config("gapscan", {"alpha": "0.9"}, {})
    with pytest.raises(ValidationError):
        resolve_config("var", {"alpha": "high"}, {})


# --- commands ------------------------------------------------------------------

def test_clean_identity_and_injection(tmp_path):
    x = random_walk(400, 1e-4, 0.03, seed=7, id="r")
    src = write(tmp_path / "r.csv", x)
    run_ok("clean", src, "--out", tmp_path / "a", "--seed", 3)
    assert (tmp_path / "a" / "changelog.csv").read_text().count("\n") == 1
    assert hio.read_series(tmp_path / "a" / "cleaned.csv").values.tolist() == x.values.tolist()

    v = x.values.copy()
    v[200] += 0.005
    src = write(tmp_path / "s.csv", TimeSeries("s", x.dates, v))
    run_ok("clean", src, "--out", tmp_path / "b", "--seed", 3)
    lines = (tmp_path / "b" / "changelog.csv").read_text().splitlines()[1:]
    assert [ln.split(",")[0] for ln in lines] == [str(x.dates[200])]


def test_seed_required(tmp_path, capsys):
    src = write(tmp_path / "r.csv", random_walk(300, 1e-4, 0.03))
    code, rec = run_err(capsys, "clean", src, "--out", tmp_path / "o")
    assert code == 1 and "seed" in rec["message"]


def test_malformed_date_exit(tmp_path, capsys):
    f = tmp_path / "bad.csv"
    f.write_text("date,value\n2020-01-02,0.1\nnot-a-date,0.2\n")
    code, rec = run_err(capsys, "clean", f, "--out", tmp_path / "o", "--seed", 1)
    assert code == 1 and rec["row"] == 3 and rec["column"] == "date"
    assert rec["module"] == "io"


def test_empty_input(tmp_path, capsys):
    f = tmp_path / "empty.csv"
    f.write_text("")
    for cmd in ("clean", "var", "analyze-level", "lookup", "gapscan", "sensitivity"):
        code, _ = run_err(capsys, cmd, f, "--out", tmp_path / cmd)
        assert code != 0


def test_missing_file_is_io_error(tmp_path, capsys):
    code, rec = run_err(capsys, "gapscan", tmp_path / "nope.csv", "--out", tmp_path / "o")
    assert code == 3


def test_short_window_is_validation_error(tmp_path, capsys):
    src = write(tmp_path / "r.csv", random_walk(100, 1e-4, 0.03))
    code, rec = run_err(capsys, "var", src, "--out", tmp_path / "o", "--clean", "false",
                        "--model", "absolute")
    assert code == 1 and rec["error"] == "InsufficientDataError"


def test_computation_error_exit(tmp_path, capsys):
    v = 0.002 * np.sin(np.arange(300) / 7.0)               # crosses zero
    src = write(tmp_path / "z.csv", TimeSeries("z", business_dates(300), v))
    code, rec = run_err(capsys, "var", src, "--out", tmp_path / "o", "--clean", "false",
                        "--model", "relative")
    assert code == 2 and rec["error"] == "NearZeroDenominatorError"
    assert rec["module"] == "datamodel"


def _capital_series():
    # current window: largest 1-day fall 3; stress window: largest fall 10
    stress = [100.0 + (10 if i % 2 else 0) for i in range(12)]
    filler = [100.0] * 10
    current = [100.0 + (3 if i % 2 else 0) for i in range(12)]
    v = np.array(stress + filler + current)
    return TimeSeries("c", business_dates(len(v), "2010-01-04"), v)


@pytest.mark.parametrize("mode,expect", [("sum", 13.0), ("twomax", 20.0)])
def test_capital_modes(tmp_path, mode, expect):
    x = _capital_series()
    src = write(tmp_path / "c.csv", x)
    out = tmp_path / mode
    run_ok("var", src, "--out", out, "--clean", "false", "--model", "absolute",
           "--holding-days", 1, "--window-days", 12, "--alpha", 0.99,
           "--stress-window", f"crisis={x.dates[0]}:{x.dates[11]}", "--capital-mode", mode)
    cap = json.loads((out / "report.json").read_text())["capital"]
    assert len(cap) == 1
    assert (cap[0]["var"], cap[0]["svar"]) == (3.0, 10.0)
    assert cap[0]["capital"] == expect


def test_var_relative_equals_level_relative_at_same_level(tmp_path):
    x = TimeSeries("g", business_dates(300), np.concatenate(
        [geometric_walk(150, 0.01, 0.03, seed=2).values,
         geometric_walk(150, 0.01, 0.03, seed=3).values]))
    src = write(tmp_path / "g.csv", x)
    fn = tmp_path / "fn.json"
    fn.write_text(json.dumps({"degree": 1, "coeffs": [1.0, 0.0]}))
    rows = {}
    for model in ("relative", "level-relative"):
        out = tmp_path / model
        run_ok("var", src, "--out", out, "--clean", "false", "--model", model,
               "--level-fn", fn, "--window-days", 140,
               "--stress-window", f"s={x.dates[0]}:{x.dates[149]}")
        rows[model] = json.loads((out / "report.json").read_text())["rows"]
    for a, b in zip(rows["relative"], rows["level-relative"]):
        for f in ("var_low", "var_high", "es_low", "es_high"):
            assert a[f] == b[f]


def test_var_rate_panel(tmp_path):
    p = rate_panel(300, seed=4)
    src = write(tmp_path / "p.csv", p)
    out = tmp_path / "o"
    run_ok("var", src, "--out", out, "--seed", 1, "--model", "relative",
           "--maturities", "2,10", "--stress-window", f"s={p.dates[0]}:{p.dates[279]}")
    rows = json.loads((out / "report.json").read_text())["rows"]
    assert [(r["window_id"], r["maturity"]) for r in rows] == \
        [("current", 2.0), ("current", 10.0), ("s", 2.0), ("s", 10.0)]
    assert rows[1]["var_value"] > rows[0]["var_value"] > 0


def test_analyze_level_outputs(tmp_path):
    x = TimeSeries("f", business_dates(300), 0.0310 + 0.0001 * np.sin(np.arange(300)))
    src = write(tmp_path / "f.csv", x)
    code = main(["analyze-level", src, "--out", str(tmp_path / "o")])
    assert code == 1                                      # one bucket cannot be fitted
    x = geometric_walk(6000, 0.01, 0.04, seed=5)
    src = write(tmp_path / "g.csv", x)
    run_ok("analyze-level", src, "--out", tmp_path / "g", "--degree", 1, "--max-level", 0.2)
    fit = json.loads((tmp_path / "g" / "fit.json").read_text())["fit"]
    assert fit["degree"] == 1 and fit["pvalues"][2] is None
    assert (tmp_path / "g" / "plot.csv").read_text().startswith("series,level,sd")


def test_gapscan_outputs(tmp_path):
    p = gappy_panel(10, 100, seed=3)
    src = write(tmp_path / "p.csv", p)
    run_ok("gapscan", src, "--out", tmp_path / "o", "--window", f"{p.dates[20]}:{p.dates[80]}")
    rep = json.loads((tmp_path / "o" / "report.json").read_text())["report"]
    assert rep["universe_count"] == 10
    assert (tmp_path / "o" / "percentiles.csv").read_text().startswith("date,q0.5,q0.9")


def test_sensitivity_outputs(tmp_path):
    src = write(tmp_path / "r.csv", random_walk(280, 1e-4, 0.03, seed=4))
    run_ok("sensitivity", src, "--out", tmp_path / "o", "--model", "absolute")
    lines = (tmp_path / "o" / "sensitivity.csv").read_text().splitlines()
    assert len(lines) == 1 + 21


def test_lookup_outputs(tmp_path):
    x = geometric_walk(300, 0.01, 0.03, seed=5, id="ZERO:5Y")
    src = write(tmp_path / "z.csv", x)
    run_ok("lookup", src, "--out", tmp_path / "o", "--model", "relative,absolute",
           "--grid-lo", 0.01, "--grid-hi", 0.02,
           "--stress-window", f"s={x.dates[0]}:{x.dates[-1]}")
    t = json.loads((tmp_path / "o" / "lookup_s.json").read_text())
    assert len(t["cells"]) == 2 * 4 and t["schema_version"] == 1
    assert t["provenance"]["data_hash"] and t["provenance"]["config_hash"]


def test_manifest_and_config_replay(tmp_path):
    src = write(tmp_path / "r.csv", random_walk(300, 1e-4, 0.03, seed=8))
    run_ok("clean", src, "--out", tmp_path / "a", "--seed", 5, "--mc-trials", 64)
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["input_sha256"] == hio.file_hash(src)
    assert man["config"]["seed"] == 5
    assert set(man["outputs"]) == {"changelog.csv", "cleaned.csv", "config.txt",
                                   "detections.json"}
    run_ok("clean", src, "--out", tmp_path / "b", "--config", tmp_path / "a" / "config.txt")
    assert outputs(tmp_path / "a") == outputs(tmp_path / "b")


def test_module_entry_point(tmp_path):
    src = write(tmp_path / "p.csv", gappy_panel(5, 60, seed=1))
    r = subprocess.run([sys.executable, "-m", "histvar", "gapscan", src, "--out",
                        str(tmp_path / "o"), "--window", "2007-01-10:2007-02-20"],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "histvar", "gapscan", src, "--out",
                        str(tmp_path / "o"), "--bogus", "1"], capture_output=True, text=True)
    assert r.returncode == 1
    assert json.loads(r.stderr)["error"] == "ValidationError"
