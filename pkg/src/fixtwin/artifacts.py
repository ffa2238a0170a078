"""Deterministic result files: fixed column order, 17 significant digits, sorted JSON keys."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def fmt(x: float) -> str:
    return FLOAT_FMT % float(x)


def jsonable(obj):
    """Recursively convert numpy values; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps_json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj), encoding="utf-8")
    return path


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path


def field_rows(times, fields, channels, positions, offsets=None) -> list[str]:
    """``time,node,s,state,value`` rows; ``fields`` is ``(nt, n_channels, n_points)``.

    ``offsets[c]`` is subtracted from channel ``c`` (normalized reporting).
    """
    nt, nc, npts = fields.shape
    rows = []
    for k in range(nt):
        t = fmt(times[k])
        for c in range(nc):
            node, state = channels[c][0], channels[c][1]
            off = 0.0 if offsets is None else offsets[c]
            for j in range(npts):
                rows.append(f"{t},{node},{fmt(positions[c, j])},{state},{fmt(fields[k, c, j] - off)}")
    return rows


def write_field_csv(path, times, fields, channels, positions, offsets=None) -> Path:
    path = Path(path)
    rows = field_rows(times, fields, channels, positions, offsets)
    path.write_text("time,node,s,state,value\n" + "".join(r + "\n" for r in rows), encoding="utf-8")
    return path


def write_signal_csv(path, times, signals: list[tuple[str, np.ndarray]]) -> Path:
    """``time,signal,value`` rows; ``signals`` is an ordered list of ``(name, (nt,) values)``."""
    path = Path(path)
    lines = ["time,signal,value\n"]
    for k, t in enumerate(times):
        ts = fmt(t)
        for name, vals in signals:
            lines.append(f"{ts},{name},{fmt(vals[k])}\n")
    path.write_text("".join(lines), encoding="utf-8")
    return path


def write_table_csv(path, header: list[str], rows) -> Path:
    path = Path(path)
    lines = [",".join(header) + "\n"]
    for r in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in r) + "\n")
    path.write_text("".join(lines), encoding="utf-8")
    return path
