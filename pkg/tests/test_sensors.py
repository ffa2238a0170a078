from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fixtwin.sensors import SensorError, ingest_sensor_csv, write_sensor_csv
from fixtwin.tuning import rmse


def _write(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_two_runs_are_averaged(tmp_path):
    p = _write(tmp_path, "time,value,run\n0,1,a\n1,5,a\n0,3,b\n1,7,b\n")
    s = ingest_sensor_csv(p)
    np.testing.assert_array_equal(s.times, [0.0, 1.0])
    np.testing.assert_array_equal(s.values, [2.0, 6.0])
    assert s.runs == 2 and s.initial_value == 2.0
    assert s.series_id == "s"


def test_single_run_unchanged(tmp_path):
    p = _write(tmp_path, "time,value\n0,1.5\n0.5,2.5\n1,-3\n")
    s = ingest_sensor_csv(p, series_id="probe")
    np.testing.assert_array_equal(s.values, [1.5, 2.5, -3.0])
    assert s.runs == 1 and s.series_id == "probe"


@pytest.mark.parametrize("text, msg", [
    ("t,v\n0,1\n", "header"),
    ("", "empty"),
    ("time,value\n", "no samples"),
    ("time,value\n0,nan\n", "non-finite"),
    ("time,value\n0,abc\n", "non-numeric"),
    ("time,value\n0,1,2\n", "expected 2 fields"),
    ("time,value\n0,1\n0,2\n", "strictly increasing"),
    ("time,value\n1,1\n0,2\n", "strictly increasing"),
    ("time,value,run\n0,1,a\n0,1,b\n1,1,b\n", "different times"),
])
def test_malformed_files(tmp_path, text, msg):
    with pytest.raises(SensorError, match=msg):
        ingest_sensor_csv(_write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(SensorError, match="cannot read"):
        ingest_sensor_csv(tmp_path / "none.csv")


def test_error_names_the_line(tmp_path):
    with pytest.raises(SensorError, match=r"s\.csv:3"):
        ingest_sensor_csv(_write(tmp_path, "time,value\n0,1\n1,x\n"))


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=30))
def test_write_read_round_trip(tmp_path_factory, vals):
    p = tmp_path_factory.mktemp("rt") / "r.csv"
    t = np.arange(len(vals)) * 0.1
    write_sensor_csv(p, t, vals)
    s = ingest_sensor_csv(p)
    np.testing.assert_array_equal(s.times, t)
    np.testing.assert_array_equal(s.values, vals)
    assert rmse(s.values, np.asarray(vals)) == 0.0


def test_multi_run_round_trip(tmp_path, rng):
    t = np.linspace(0, 2, 9)
    v = rng.standard_normal((9, 3))
    write_sensor_csv(tmp_path / "m.csv", t, v, runs=["x", "y", "z"])
    s = ingest_sensor_csv(tmp_path / "m.csv")
    assert s.runs == 3
    np.testing.assert_allclose(s.values, v.mean(axis=1), rtol=0, atol=1e-15)


def test_fd_trace_reingested(tmp_path):
    from fixtwin.benchmarks import heat_dirichlet
    from fixtwin.fd import fd_reference_simulate

    x0 = lambda s: np.sin(np.pi * np.asarray(s))[:, None]  # noqa: E731
    tr = fd_reference_simulate(heat_dirichlet(), 0.2, 0.01, cells=50, x0=x0)
    y = tr.outputs["y"][:, 0]
    write_sensor_csv(tmp_path / "fd.csv", tr.times, y)
    s = ingest_sensor_csv(tmp_path / "fd.csv")
    assert rmse(s.values, y, s.times, tr.times) == 0.0
