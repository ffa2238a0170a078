from __future__ import annotations

import math

import pytest
import tomli

from fixtwin.config import ConfigError, dumps, from_dict, loads, parse_config, to_dict, write_config
from fixtwin.expr import ExpressionError, Namespace
from fixtwin.fixation import fixation_model
from fixtwin.graph import validate
from fixtwin.twin import ModelError, build_graph, build_model


@pytest.mark.parametrize("name", ["fixation_default", "heat_estimator", "double_neumann"])
def test_round_trip(data_dir, name):
    cfg = parse_config(data_dir / f"{name}.toml")
    again = loads(dumps(cfg), cfg.base_dir)
    assert again == cfg
    assert dumps(again) == dumps(cfg)


def test_write_and_parse(tmp_path, heat_toml):
    cfg = parse_config(heat_toml)
    write_config(cfg, tmp_path / "c.toml")
    again = parse_config(tmp_path / "c.toml")
    # equal content; the base directory follows the file
    assert to_dict(again) == to_dict(cfg)
    assert again.base_dir == tmp_path


def test_config_model_matches_programmatic(fixation_toml):
    sys_c = build_model(parse_config(fixation_toml)).sys
    sys_p = fixation_model().sys
    for k in ("T", "Tw", "A", "B1", "Bq", "C1", "C2", "D21"):
        assert getattr(sys_c, k).allclose(getattr(sys_p, k), atol=1e-12), k


def _tree(path):
    return tomli.loads(path.read_text())


def test_unknown_key_rejected(heat_toml):
    tree = _tree(heat_toml)
    tree["simulation"]["stepsize"] = 0.1
    with pytest.raises(ConfigError) as exc:
        from_dict(tree)
    assert exc.value.kind == "schema"
    assert exc.value.path == "simulation.stepsize"


def test_bad_enum_rejected(heat_toml):
    tree = _tree(heat_toml)
    tree["nodes"][0]["bcs"][0]["form"] = "sticky"
    with pytest.raises(ConfigError) as exc:
        from_dict(tree)
    assert exc.value.path.startswith("nodes.0.bcs.0.form")


def test_syntax_error_reports_position(heat_toml):
    text = heat_toml.read_text().replace("noise = 0.1", "noise = = 0.1")
    with pytest.raises(ConfigError) as exc:
        loads(text)
    assert exc.value.kind == "syntax"
    assert "line 5" in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError) as exc:
        parse_config(tmp_path / "absent.toml")
    assert exc.value.kind == "io"


def test_unknown_material_reference(heat_toml):
    tree = _tree(heat_toml)
    tree["nodes"][0]["material"] = "steel"
    with pytest.raises(ConfigError, match="unknown material"):
        from_dict(tree)


def test_missing_bc_is_a_violation(heat_toml):
    tree = _tree(heat_toml)
    tree["nodes"][0]["bcs"] = tree["nodes"][0]["bcs"][:1]
    g = build_graph(from_dict(tree))
    rep = validate(g)
    assert not rep.ok
    assert any("1 of 2" in v for v in rep.violations)


def test_with_replaces_parameters(fixation_toml):
    cfg = parse_config(fixation_toml)
    hot = cfg.with_(T_hai=150.0)
    assert hot.parameters["T_hai"] == 150.0 and cfg.parameters["T_hai"] == 140.0
    assert hot.base_dir == cfg.base_dir
    with pytest.raises(KeyError):
        cfg.with_(nonexistent=1.0)


def test_expression_coefficients(heat_toml):
    tree = _tree(heat_toml)
    tree["parameters"]["scale"] = "2 * sqrt(4)"
    tree["materials"]["unit"]["kappa"] = "scale / 4 + 0 * L_rod"
    model = build_model(from_dict(tree))
    plain = build_model(from_dict(_tree(heat_toml)))
    assert model.sys.A.allclose(plain.sys.A, atol=1e-15)


def test_bad_expression_is_model_error(heat_toml):
    tree = _tree(heat_toml)
    tree["materials"]["unit"]["kappa"] = "undefined_name * 2"
    with pytest.raises(ModelError, match="unknown name"):
        build_model(from_dict(tree))


def test_namespace_examples():
    ns = Namespace({"a": 2.0, "b": "a ** 3 - 1", "c": "max(b, 10) / 4"}, {"air": {"kappa": "a / 100"}})
    assert ns.lookup("b") == 7.0
    assert ns.lookup("c") == 2.5
    assert ns.evaluate("air.kappa * 50") == 1.0
    assert ns.evaluate("exp(0) + cos(0)") == 2.0
    assert math.isclose(ns.evaluate("log10(1000)"), 3.0)


@pytest.mark.parametrize("text, msg", [
    ("x", "unknown name"), ("1 +", "cannot parse"), ("__import__('os')", "unknown function"),
    ("[1, 2]", "unsupported"), ("1 / 0", "division by zero"), ("air.rho", "unknown field"),
])
def test_namespace_errors(text, msg):
    with pytest.raises(ExpressionError, match=msg):
        Namespace({}, {"air": {"kappa": 1.0}}).evaluate(text)


def test_namespace_cycle():
    ns = Namespace({"a": "b + 1", "b": "a * 2"})
    with pytest.raises(ExpressionError, match="cyclic"):
        ns.lookup("a")


def test_booleans_are_not_numbers():
    with pytest.raises(ExpressionError):
        Namespace({}).evaluate(True)

