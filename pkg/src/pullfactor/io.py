"""CSV and JSON readers/writers with embedded provenance."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InvalidArgumentError
from .fitting import MeasurementSeries

MEASUREMENT_COLUMNS = ("delta_f_e_hz", "delta_f_d_hz")
CURVE_COLUMNS = ("delta_f_e_hz", "delta_f_d_hz", "pf", "branch_id")


def fmt(x) -> str:
    """17 significant digits: enough to round-trip any double."""
    return format(float(x), ".17g")


def provenance(command: str, config: dict) -> dict:
    return {"tool": "pullfactor", "version": __version__, "command": command, "config": config}


def _clean(obj):
    """Make an object JSON-safe: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=False) + "\n"


def write_text(path, text: str):
    if path is None or str(path) == "-":
        import sys

        sys.stdout.write(text)
        return
    Path(path).write_text(text)


def write_json(path, obj):
    write_text(path, dumps(obj))


def _comment_block(prov: dict) -> str:
    return "".join(f"# {line}\n" for line in json.dumps(_clean(prov), sort_keys=False).splitlines())


def measurements_to_csv(series: MeasurementSeries, prov: dict | None = None) -> str:
    buf = io.StringIO()
    if prov is not None:
        buf.write(_comment_block(prov))
    extra_cols = list(series.extra)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*MEASUREMENT_COLUMNS, "weight", *extra_cols])
    for i in range(len(series)):
        writer.writerow(
            [fmt(series.delta_f_e[i]), fmt(series.delta_f_d[i]), fmt(series.weight[i])]
            + [series.extra[c][i] for c in extra_cols]
        )
    return buf.getvalue()


def write_measurements(path, series: MeasurementSeries, prov: dict | None = None):
    write_text(path, measurements_to_csv(series, prov))


def parse_measurements(text: str, source: str = "<string>") -> MeasurementSeries:
    """Parse a measurement CSV.

    Lines starting with ``#`` are skipped.  The header must name
    ``delta_f_e_hz`` and ``delta_f_d_hz``; ``weight`` is optional and any
    other column is carried along untouched.
    """
    rows = [(i + 1, line) for i, line in enumerate(text.splitlines()) if line.strip() and not line.lstrip().startswith("#")]
    if not rows:
        raise InvalidArgumentError(f"{source}: no header row")
    header_no, header_line = rows[0]
    header = [h.strip() for h in next(csv.reader([header_line]))]
    missing = [c for c in MEASUREMENT_COLUMNS if c not in header]
    if missing:
        raise InvalidArgumentError(f"{source}:{header_no}: header lacks column(s) {', '.join(missing)}")
    ie, id_ = header.index("delta_f_e_hz"), header.index("delta_f_d_hz")
    iw = header.index("weight") if "weight" in header else None
    extra_cols = [c for c in header if c not in (*MEASUREMENT_COLUMNS, "weight")]
    e, d, w = [], [], []
    extra = {c: [] for c in extra_cols}
    bad = []
    for line_no, line in rows[1:]:
        fields = [f.strip() for f in next(csv.reader([line]))]
        if len(fields) != len(header):
            bad.append(f"line {line_no}: expected {len(header)} fields, got {len(fields)}")
            continue
        try:
            vals = [float(fields[ie]), float(fields[id_])]
            wt = float(fields[iw]) if iw is not None and fields[iw] != "" else 1.0
        except ValueError as exc:
            bad.append(f"line {line_no}: {exc}")
            continue
        if not all(math.isfinite(v) for v in (*vals, wt)) or wt < 0:
            bad.append(f"line {line_no}: non-finite value or negative weight")
            continue
        e.append(vals[0])
        d.append(vals[1])
        w.append(wt)
        for c in extra_cols:
            extra[c].append(fields[header.index(c)])
    if bad:
        raise InvalidArgumentError(f"{source}: malformed rows:\n  " + "\n  ".join(bad))
    return MeasurementSeries(np.array(e), np.array(d), np.array(w), {"source": source}, extra)


def read_measurements(path) -> MeasurementSeries:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read {path}: {exc}") from exc
    return parse_measurements(text, str(path))


def curve_to_csv(curve, prov: dict | None = None) -> str:
    buf = io.StringIO()
    if prov is not None:
        buf.write(_comment_block(prov))
    buf.write(",".join(CURVE_COLUMNS) + "\n")
    for e, d, p, b in curve.rows():
        buf.write(f"{fmt(e)},{fmt(d)},{fmt(p)},{b}\n")
    return buf.getvalue()


def read_curve(path):
    """Read a response-curve CSV back into a dict of arrays."""
    lines = [l for l in Path(path).read_text().splitlines() if l and not l.startswith("#")]
    header = lines[0].split(",")
    data = np.array([[float(v) for v in l.split(",")] for l in lines[1:]])
    return {h: data[:, i] for i, h in enumerate(header)}


def read_comment_provenance(path) -> dict:
    lines = [l[2:] for l in Path(path).read_text().splitlines() if l.startswith("# ")]
    return json.loads("\n".join(lines)) if lines else {}
