"""Sensor series ingestion: ``time,value[,run]`` CSV files, averaged over runs."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class SensorError(ValueError):
    """Malformed sensor file."""


@dataclass(frozen=True)
class SensorSeries:
    """Mean reading per time stamp across the runs found in the file."""

    times: np.ndarray
    values: np.ndarray
    series_id: str = ""
    runs: int = 1

    @property
    def initial_value(self) -> float:
        """Mean of the first reading, the suggested initial condition."""
        return float(self.values[0])


def ingest_sensor_csv(path, series_id: str | None = None) -> SensorSeries:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SensorError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise SensorError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header not in (["time", "value"], ["time", "value", "run"]):
        raise SensorError(f"{path}: header must be time,value[,run], got {','.join(header)}")
    has_run = len(header) == 3
    data: dict[str, list[tuple[float, float]]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise SensorError(f"{path}:{lineno}: expected {len(header)} fields")
        try:
            t, v = float(row[0]), float(row[1])
        except ValueError:
            raise SensorError(f"{path}:{lineno}: non-numeric entry") from None
        if not (np.isfinite(t) and np.isfinite(v)):
            raise SensorError(f"{path}:{lineno}: non-finite value")
        data.setdefault(row[2].strip() if has_run else "", []).append((t, v))
    if not data:
        raise SensorError(f"{path}: no samples")
    series = []
    for run, samples in data.items():
        t = np.array([s[0] for s in samples])
        if np.any(np.diff(t) <= 0):
            raise SensorError(f"{path}: time is not strictly increasing in run {run or '<single>'}")
        series.append((t, np.array([s[1] for s in samples])))
    t0 = series[0][0]
    for t, _ in series[1:]:
        if t.shape != t0.shape or not np.array_equal(t, t0):
            raise SensorError(f"{path}: runs are sampled at different times")
    values = np.mean([v for _, v in series], axis=0)
    return SensorSeries(t0, values, series_id or path.stem, len(series))


def write_sensor_csv(path, times, values, runs=None) -> None:
    """Write ``time,value`` (one run) or ``time,value,run`` rows with 17 digits."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if values.ndim == 1:
            fh.write("time,value\n")
            for t, v in zip(times, values):
                fh.write(f"{t:.17g},{v:.17g}\n")
            return
        names = runs or [str(k + 1) for k in range(values.shape[1])]
        fh.write("time,value,run\n")
        for k, name in enumerate(names):
            for t, v in zip(times, values[:, k]):
                fh.write(f"{t:.17g},{v:.17g},{name}\n")
