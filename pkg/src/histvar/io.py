"""CSV input and output.

Series files have the header ``date,value``; panel files have ``date`` followed
by instrument ids (``OIS:5Y``, ``DEPO:3M``, ``IRS:10Y``, ``CDS:<name>``).
Empty cells are missing values.  Floats are written with ``repr`` so a
write / read round trip is exact.
"""
from __future__ import annotations

import csv
import hashlib
import io
from pathlib import Path

import numpy as np

from .core import InstrumentPanel, TimeSeries
from .errors import HistVarError, ValidationError


class CsvParseError(ValidationError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _rows(text: str, source: str):
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise CsvParseError(f"{source}: empty input", row=1)
    header = [h.strip() for h in rows[0]]
    if not header or header[0].lower() != "date":
        raise CsvParseError(f"{source}: first header cell must be 'date'", row=1, column=header[0] if header else None)
    if len(header) < 2:
        raise CsvParseError(f"{source}: no value columns", row=1)
    if not rows[1:]:
        raise CsvParseError(f"{source}: no data rows", row=2)
    return header, rows[1:]


def parse_table(text: str, source: str = "<input>"):
    """Header, dates, values (NaN where missing) and presence mask."""
    header, body = _rows(text, source)
    ncol = len(header)
    dates = []
    vals = np.full((len(body), ncol - 1), np.nan)
    present = np.zeros((len(body), ncol - 1), dtype=bool)
    for r, row in enumerate(body):
        line = r + 2
        if len(row) != ncol:
            raise CsvParseError(f"{source}: row {line} has {len(row)} cells, expected {ncol}",
                                row=line)
        try:
            dates.append(np.datetime64(row[0].strip(), "D"))
        except ValueError:
            raise CsvParseError(f"{source}: row {line}, column 'date': bad date {row[0]!r}",
                                row=line, column="date") from None
        for c, cell in enumerate(row[1:]):
            cell = cell.strip()
            if not cell:
                continue
            try:
                v = float(cell)
            except ValueError:
                raise CsvParseError(
                    f"{source}: row {line}, column {header[c + 1]!r}: bad number {cell!r}",
                    row=line, column=header[c + 1]) from None
            if not np.isfinite(v):
                raise CsvParseError(
                    f"{source}: row {line}, column {header[c + 1]!r}: non-finite value",
                    row=line, column=header[c + 1])
            vals[r, c] = v
            present[r, c] = True
    return header, np.array(dates, dtype="datetime64[D]"), vals, present


def is_series_header(header) -> bool:
    return len(header) == 2 and header[1].lower() == "value"


def read_input(path):
    """Read a series or panel CSV, deciding by the header."""
    path = Path(path)
    text = path.read_text()
    header, dates, vals, present = parse_table(text, str(path))
    try:
        if is_series_header(header):
            return TimeSeries(path.stem, dates, vals[:, 0], present[:, 0])
        return InstrumentPanel(dates, header[1:], vals, present)
    except HistVarError as e:
        raise CsvParseError(f"{path}: {e}", row=1) from e


def read_series(path) -> TimeSeries:
    data = read_input(path)
    if not isinstance(data, TimeSeries):
        raise ValidationError(f"{path}: expected a date,value series")
    return data


def read_panel(path) -> InstrumentPanel:
    data = read_input(path)
    if not isinstance(data, InstrumentPanel):
        raise ValidationError(f"{path}: expected an instrument panel")
    return data


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.datetime64):
        return str(v)
    if v is None:
        return ""
    return str(v)


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def series_rows(ts: TimeSeries):
    for d, v, p in zip(ts.dates, ts.values, ts.present):
        yield d, (float(v) if p else None)


def write_series(path, ts: TimeSeries) -> None:
    write_rows(path, ["date", "value"], series_rows(ts))


def write_panel(path, panel: InstrumentPanel) -> None:
    def rows():
        for r, d in enumerate(panel.dates):
            yield [d] + [float(v) if p else None
                         for v, p in zip(panel.quotes[r], panel.present[r])]
    write_rows(path, ["date"] + panel.ids, rows())
