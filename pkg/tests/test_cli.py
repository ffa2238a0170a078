from __future__ import annotations

import json
from pathlib import Path

import pytest
import tomli
import tomli_w

from fixtwin.artifacts import dumps_json
from fixtwin.cli import invariant_suite, main
from fixtwin.config import parse_config


def _variant(src: Path, dst: Path, edit) -> Path:
    tree = tomli.loads(src.read_text())
    edit(tree)
    dst.write_text(tomli_w.dumps(tree))
    return dst


def _run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def _err_json(err: str) -> dict:
    lines = [l for l in err.splitlines() if l.startswith("{")]
    assert len(lines) == 1, err
    return json.loads(lines[0])


def _tree_bytes(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# exit codes


def test_usage_errors(capsys, fixation_toml):
    for argv in ([], ["simulate"], ["explode", "--config", str(fixation_toml)],
                 ["simulate", "--config", str(fixation_toml), "--seed", "-1"],
                 ["simulate", "--config", str(fixation_toml), "--workers", "0"]):
        code, _, err = _run(capsys, *argv)
        assert code == 1
        assert _err_json(err)["error"] == "usage"


def test_missing_config_is_usage(capsys, tmp_path):
    code, _, err = _run(capsys, "check-bt", "--config", str(tmp_path / "nope.toml"))
    assert code == 1
    assert _err_json(err) == {"error": "config_io", "exit_code": 1, "message": _err_json(err)["message"]}


def test_schema_error_exit_2(capsys, tmp_path, heat_toml):
    cfg = _variant(heat_toml, tmp_path / "bad.toml", lambda t: t["simulation"].update(stepsize=1))
    code, _, err = _run(capsys, "check-bt", "--config", str(cfg))
    assert code == 2
    e = _err_json(err)
    assert e["error"] == "config_schema" and "simulation.stepsize" in e["message"]


def test_syntax_error_exit_2(capsys, tmp_path):
    cfg = tmp_path / "broken.toml"
    cfg.write_text("[simulation\nt_final = 1\n")
    code, _, err = _run(capsys, "convert", "--config", str(cfg))
    assert code == 2
    assert "line 1" in _err_json(err)["message"]


def test_check_bt_verdicts(capsys, tmp_path, fixation_toml, double_neumann_toml):
    code, out, _ = _run(capsys, "check-bt", "--config", str(fixation_toml), "--out", str(tmp_path / "a"))
    assert code == 0 and out.startswith("invertible")
    code, out, err = _run(capsys, "check-bt", "--config", str(double_neumann_toml), "--out", str(tmp_path / "b"))
    assert code == 2 and out.startswith("singular")
    assert _err_json(err)["error"] == "singular_boundary"


def test_missing_bc_validate_exit_2(capsys, tmp_path, heat_toml):
    def drop(t):
        t["nodes"][0]["bcs"] = t["nodes"][0]["bcs"][:1]
    cfg = _variant(heat_toml, tmp_path / "short.toml", drop)
    code, _, err = _run(capsys, "validate", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 2
    assert "1 of 2" in _err_json(err)["message"]


def test_model_error_exit_2(capsys, tmp_path, heat_toml):
    cfg = _variant(heat_toml, tmp_path / "e.toml", lambda t: t["materials"]["unit"].update(kappa="nope + 1"))
    code, _, err = _run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 2 and _err_json(err)["error"] == "model_invalid"


def test_numeric_failure_exit_3(capsys, tmp_path, heat_toml):
    # a one-point search gives no usable bracket for the SDP
    def edit(t):
        t["synthesis"].update(gamma_start=1e-12, gamma_max=1e-11, degree=0)
    cfg = _variant(heat_toml, tmp_path / "n.toml", edit)
    code, _, err = _run(capsys, "synthesize", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 3 and _err_json(err)["error"] == "numerical_failure"


# fixture structure and artifacts


def test_fixture_structure(capsys, tmp_path, fixation_toml):
    code, out, _ = _run(capsys, "validate", "--config", str(fixation_toml), "--out", str(tmp_path))
    assert code == 0 and out.rstrip().endswith("valid")
    rep = json.loads((tmp_path / "validate.json").read_text())
    st = rep["structure"]
    assert st["nodes"] == 6 and st["edges"] == 10
    assert st["bcs"] == {"temperature": 12, "moisture": 4}
    d = st["dims"]
    assert (d["n_y"], d["n_z"], d["n_w"], d["n_d"]) == (2, 1, 1, 3)
    # the report reparses to the in-memory result
    assert rep == json.loads(dumps_json(invariant_suite(parse_config(fixation_toml))))


def test_simulate_row_counts(capsys, tmp_path, fixation_toml):
    assert _run(capsys, "simulate", "--config", str(fixation_toml), "--out", str(tmp_path))[0] == 0
    meta = json.loads((tmp_path / "simulate.json").read_text())
    nt, npts, nch = meta["times"], meta["points"], len(meta["channels"])
    assert (nt, npts, nch) == (501, 11, 8)
    rows = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert rows[0] == "time,node,s,state,value"
    assert len(rows) - 1 == nt * nch * npts
    sig = (tmp_path / "signals.csv").read_text().splitlines()
    # y (2), z (1), p (2), q (2) channels per time
    assert len(sig) - 1 == nt * 7


def test_normalize_shifts_temperatures(capsys, tmp_path, fixation_toml):
    cfg = _variant(fixation_toml, tmp_path / "n.toml", lambda t: (t["outputs"].update(normalize=True),
                                                                   t["simulation"].update(t_final=1.0)))
    raw = _variant(fixation_toml, tmp_path / "r.toml", lambda t: t["simulation"].update(t_final=1.0))
    _run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "n"))
    _run(capsys, "simulate", "--config", str(raw), "--out", str(tmp_path / "r"))
    fn = json.loads((tmp_path / "n" / "simulate.json").read_text())["final"]
    fr = json.loads((tmp_path / "r" / "simulate.json").read_text())["final"]
    names = list(fr)
    assert any(abs(fr[k] - fn[k] - 25.0) < 1e-9 for k in names)
    assert any(fr[k] == fn[k] for k in names)


def test_estimate_zero_disturbance_zero_error(capsys, tmp_path, heat_toml):
    def edit(t):
        t["signals"]["w"][0]["a"] = 0.0
        t["synthesis"]["gain"] = "zero"
    cfg = _variant(heat_toml, tmp_path / "z.toml", edit)
    assert _run(capsys, "estimate", "--config", str(cfg), "--out", str(tmp_path / "o"))[0] == 0
    rep = json.loads((tmp_path / "o" / "estimate.json").read_text())
    assert rep["peak_z_error"] == 0.0
    sweep = json.loads((tmp_path / "o" / "ic_sweep.json").read_text())
    assert sweep["superposition_residual"] <= 1e-8
    assert sweep["ratio_10_over_5"] == pytest.approx(2.0, abs=1e-6)


# determinism


def _fast_tune(t):
    t["simulation"].update(t_final=2.0, store_every=1)
    t["simulation"]["tune"]["parameters"] = {"kappa_1": [0.022, 0.026], "kappa_6": [0.022, 0.026]}


def _fast_synthesis(t):
    t["synthesis"].update(degree=1, verify_t_final=2.0, family_size=3)
    t["simulation"].update(t_final=2.0)


CASES = [
    ("fixation_default", "check-bt", None),
    ("fixation_default", "convert", None),
    ("fixation_default", "simulate", None),
    ("fixation_default", "validate", None),
    ("fixation_default", "estimate", None),
    ("fixation_default", "tune", _fast_tune),
    ("heat_estimator", "synthesize", _fast_synthesis),
    ("heat_estimator", "estimate", _fast_synthesis),
]


@pytest.mark.parametrize("fixture, command, edit", CASES, ids=[f"{c}-{f}" for f, c, _ in CASES])
def test_byte_identical_reruns(capsys, tmp_path, data_dir, fixture, command, edit):
    cfg = data_dir / f"{fixture}.toml"
    if edit is not None:
        cfg = _variant(cfg, tmp_path / "cfg.toml", edit)
    outs = []
    for k in range(2):
        extra = ["--workers", "2"] if command == "tune" else []
        code, stdout, _ = _run(capsys, command, "--config", str(cfg), "--out", str(tmp_path / f"run{k}"),
                               "--seed", "7", *extra)
        assert code == 0
        outs.append((stdout, _tree_bytes(tmp_path / f"run{k}")))
    assert outs[0][1], "no artifacts written"
    assert outs[0] == outs[1]
