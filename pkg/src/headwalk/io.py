"""Delimited output with a provenance header.

Floats are written with 17 significant digits so that files round-trip
exactly and fixed-seed runs are byte-identical.
"""
from __future__ import annotations

import contextlib
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__

FORMATS = ("csv", "json")


def format_value(value) -> str:
    """Text form of one cell."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(value)


def _plain(obj):
    """JSON-safe copy with numpy scalars and arrays converted."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else format_value(v)
    return obj


def header(command: str, seed: int | None, params: dict) -> dict:
    """Provenance record: version, command, seed and resolved parameters."""
    return {"artifact": "headwalk", "version": __version__, "command": command,
            "seed": seed, "params": _plain(params)}


def header_line(meta: dict) -> str:
    params = json.dumps(meta["params"], sort_keys=True, separators=(",", ":"))
    return (f"# headwalk {meta['version']} command={meta['command']} "
            f"seed={meta['seed']} params={params}")


@contextlib.contextmanager
def open_output(path):
    """Text stream for ``path``; standard output for None or "-"."""
    if path is None or str(path) == "-":
        yield sys.stdout
        return
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    with open(path, "w", newline="") as fh:
        yield fh


def write_table(path, columns, rows, meta: dict, fmt: str = "csv", extra: dict | None = None):
    """Write a table as CSV (header comment line, then columns) or JSON."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    with open_output(path) as fh:
        if fmt == "csv":
            fh.write(header_line(meta) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([format_value(v) for v in row])
        else:
            doc = {"header": meta, "columns": list(columns),
                   "rows": [_plain(list(r)) for r in rows]}
            if extra:
                doc["summary"] = _plain(extra)
            json.dump(doc, fh, indent=1, sort_keys=False)
            fh.write("\n")


def write_json(path, payload: dict, meta: dict):
    with open_output(path) as fh:
        json.dump({"header": meta, **_plain(payload)}, fh, indent=1)
        fh.write("\n")


def read_table(path) -> tuple[dict | None, list[str], list[list[str]]]:
    """Read back a CSV written by ``write_table``: (header params, columns, rows)."""
    lines = Path(path).read_text().splitlines()
    meta = None
    if lines and lines[0].startswith("# headwalk"):
        params = lines[0].split("params=", 1)[1]
        meta = json.loads(params)
        lines = lines[1:]
    rows = list(csv.reader(lines))
    return meta, rows[0], rows[1:]
