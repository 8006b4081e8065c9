import json

import numpy as np
import pytest

from beamforge import ValidationError
from beamforge.config import DEFAULTS, build_config, load_config
from beamforge.reporting import (
    config_hash, read_csv, read_hash, read_trace, write_csv, write_gnuplot, write_trace,
)


def test_hash_is_canonical():
    a = {"b": 1, "a": [1.0, 2.0], "c": {"y": None, "x": "s"}}
    b = {"c": {"x": "s", "y": None}, "a": [1.0, 2.0], "b": 1}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({**a, "b": 2})
    assert config_hash({"v": np.float64(0.5)}) == config_hash({"v": 0.5})


def test_csv_round_trip(tmp_path):
    t = np.linspace(0, 1, 11)
    v = np.exp(-t) / 3.0
    path = write_trace(tmp_path / "x.csv", t, v, "abc")
    assert path.read_text().splitlines()[:2] == ["# config_sha256=abc", "t,value"]
    assert read_hash(path) == "abc"
    t2, v2 = read_trace(path)
    np.testing.assert_array_equal(t2, t)
    np.testing.assert_array_equal(v2, v)


def test_csv_is_byte_stable(tmp_path):
    t = np.linspace(0, 1, 5)
    a = write_trace(tmp_path / "a.csv", t, np.sqrt(t), "h").read_bytes()
    b = write_trace(tmp_path / "b.csv", t.copy(), np.sqrt(t), "h").read_bytes()
    assert a == b


def test_header_is_mandatory(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("0.0,1.0\n0.5,2.0\n1.0,3.0\n")
    with pytest.raises(ValidationError, match="header"):
        read_csv(p)


@pytest.mark.parametrize("text", [
    "t,value\n0,1\n0.5,x\n1,2\n",         # non-numeric
    "t,value\n0,1\n0.5\n1,2\n",           # ragged
    "t,value\n0.1,1\n0.2,1\n0.3,1\n",     # does not start at zero
    "t,value\n0,1\n0.5,1\n0.6,1\n",       # not uniform
    "t,value\n",                          # empty
])
def test_bad_traces_rejected(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(ValidationError):
        read_trace(p)


def test_column_lengths_checked(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "x.csv", ["a", "b"], [[1.0], [1.0, 2.0]], "h")


def test_gnuplot_script(tmp_path):
    p = write_gnuplot(tmp_path / "x.gp", "x.csv", [(2, "a"), (3, "b")], "T", "t", "y", logscale_y=True)
    text = p.read_text()
    assert "set datafile separator ','" in text and "set logscale y" in text
    assert "'x.csv' using 1:2" in text and "'x.csv' using 1:3" in text


def test_defaults_build():
    cfg = build_config()
    assert cfg.elements == 100 and cfg.steps is None and cfg.startup == "sdirk"
    assert cfg.problem.coupling == pytest.approx(0.0634197, abs=5e-8)
    assert cfg.cg.morozov_epsilon == 1.2 and cfg.noise.seed == 42


@pytest.mark.parametrize("raw", [
    {"solver": {}},
    {"grid": {"elemnts": 10}},
    {"cg": {"tolerance": 1e-3}},
    {"coefficients": {"E": 1.0}},
    {"coefficients": {"r": {"kind": "constant", "value": 1.0, "units": "N"}}},
])
def test_unknown_keys_rejected(raw):
    with pytest.raises(ValidationError, match="unknown key"):
        build_config(raw)


@pytest.mark.parametrize("raw", [
    {"grid": {"elements": 0}},
    {"grid": {"elements": 2.5}},
    {"grid": {"startup": "leapfrog"}},
    {"grid": {"steps": "many"}},
    {"cg": {"stop_at_discrepancy": "yes"}},
    {"cg": {"morozov_epsilon": 0.9}},
    {"noise": {"gamma": -1}},
    {"coefficients": {"r": {"kind": "spline"}}},
    {"coefficients": {"r": {"kind": "table", "x": [0, 1]}}},
    {"coefficients": {"r": "import os"}},
    {"output_dir": 3},
])
def test_invalid_values_rejected(raw):
    with pytest.raises(ValidationError):
        build_config(raw)


def test_coefficient_forms():
    cfg = build_config({"coefficients": {
        "rho_a": 2.0,
        "mu": "sin(pi*x)",
        "r": {"kind": "table", "x": [0, 1], "y": [2, 3]},
        "kappa": {"kind": "constant", "value": 0.5, "lower_bound": 0.25},
    }})
    x = np.array([0.5])
    assert cfg.problem.rho_a(x)[0] == 2.0
    assert cfg.problem.mu(x)[0] == pytest.approx(1.0)
    assert cfg.problem.r(x)[0] == pytest.approx(2.5)
    assert cfg.problem.kappa.lower_bound == 0.25


def test_digest_ignores_output_dir():
    assert build_config({"output_dir": "a"}).digest == build_config({"output_dir": "b"}).digest
    assert build_config({"noise": {"seed": 1}}).digest != build_config({"noise": {"seed": 2}}).digest


def test_partial_sections_merge():
    cfg = build_config({"grid": {"elements": 7}})
    assert cfg.elements == 7 and cfg.startup == DEFAULTS["grid"]["startup"]


def test_load_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"grid": {"elements": 5}}))
    assert load_config(p) == {"grid": {"elements": 5}}
    p.write_text("{not json")
    with pytest.raises(ValidationError):
        load_config(p)
    with pytest.raises(ValidationError):
        load_config(tmp_path / "missing.json")
