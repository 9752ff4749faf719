import copy
import json

import numpy as np
import pytest

from wnlbracket.cli import main
from wnlbracket.config import (ConfigError, bundled_configs, from_dict, load_config,
                               resolve_config_path, validate)
from wnlbracket.report import dumps, strip_timing
from wnlbracket.runner import run

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def raw_config(name):
    return tomllib.loads(resolve_config_path(name).read_text())


def diagnostics_for(raw):
    return [str(d) for d in validate(from_dict(raw))]


def test_bundled_corpus_is_complete():
    assert set(bundled_configs()) >= {"gardner.cfg", "flat2d.cfg",
                                      "example_constant_curvature.cfg", "broken_gauss.cfg",
                                      "broken_gamma.cfg"}


@pytest.mark.parametrize("name", ["gardner.cfg", "flat2d.cfg", "example_constant_curvature.cfg",
                                  "broken_gauss.cfg", "broken_gamma.cfg"])
def test_bundled_configs_validate_cleanly(name):
    assert validate(load_config(name)) == []


def test_subchart_touching_the_degenerate_line_is_diagnosed():
    raw = raw_config("example_constant_curvature.cfg")
    raw["chart"].pop("inequalities")
    raw["chart"]["subchart_lo"] = [-1.0, -1.0]
    raw["chart"]["subchart_hi"] = [1.0, 1.0]
    diags = diagnostics_for(raw)
    assert any("metric singular at sampled point" in d for d in diags), diags


def test_subchart_leaving_the_chart_is_diagnosed():
    raw = raw_config("example_constant_curvature.cfg")
    raw["chart"]["subchart_lo"] = [-1.0, -1.0]
    diags = diagnostics_for(raw)
    assert any("outside the chart" in d for d in diags), diags


def test_asymmetric_metric_is_diagnosed():
    raw = raw_config("flat2d.cfg")
    raw["bracket"]["g"] = [["1", "u"], ["0", "1"]]
    diags = diagnostics_for(raw)
    assert any("must be symmetric" in d for d in diags), diags


def test_functional_parse_error_reports_position():
    raw = raw_config("gardner.cfg")
    raw["functionals"]["bad"] = {"density": "u^3 +* u_x"}
    diags = diagnostics_for(raw)
    assert any(d.startswith("functionals.bad") and "position 5" in d for d in diags), diags


def test_escaping_test_function_is_diagnosed():
    raw = raw_config("example_constant_curvature.cfg")
    raw["test_functions"]["far"] = [{"component": 1, "poly": [-3.0], "a": 1.0}]
    diags = diagnostics_for(raw)
    assert any(d.startswith("test_functions.far") for d in diags), diags


def test_missing_seed_is_rejected():
    raw = raw_config("flat2d.cfg")
    raw.pop("seed")
    with pytest.raises(ConfigError) as err:
        from_dict(raw)
    assert any(d.location == "seed" for d in err.value.diagnostics)


def test_unknown_suite_and_bad_tolerance_are_rejected():
    raw = copy.deepcopy(raw_config("flat2d.cfg"))
    raw.setdefault("suites", {})["run"] = ["geometry", "nonsense"]
    raw["tolerances"] = {"skew": -1.0}
    with pytest.raises(ConfigError) as err:
        from_dict(raw)
    locs = {d.location for d in err.value.diagnostics}
    assert {"suites.run", "tolerances.skew"} <= locs


def test_command_line_overrides():
    cfg = load_config("gardner.cfg", {"seed": 7, "trials": 3, "grid_m": 2049, "tol_skew": 1e-9})
    assert (cfg.seed, cfg.trials, cfg.grid.m, cfg.tolerances["skew"]) == (7, 3, 2049, 1e-9)


def test_report_floats_round_trip():
    text = dumps({"x": 0.1, "y": 1 / 3, "big": float("inf"), "arr": np.array([1e-300, -2.5])})
    data = json.loads(text)
    assert data["x"] == 0.1 and data["y"] == 1 / 3 and data["big"] == "inf"
    assert data["arr"] == [1e-300, -2.5]


def test_vd_command_dumps_euler_lagrange_samples(tmp_path):
    out = tmp_path / "vd.json"
    code = main(["vd", "--config", "gardner.cfg", "--functional", "kdv", "--at", "gauss1",
                 "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    x = np.array(rep["results"]["vd"]["x"])
    vals = np.array(rep["results"]["vd"]["values"])[0]
    u = np.exp(-x ** 2)
    uxx = (4 * x ** 2 - 2) * u
    assert np.max(np.abs(vals - (3 * u ** 2 - uxx))) <= 1e-10


def test_bracket_command(tmp_path):
    out = tmp_path / "b.json"
    assert main(["bracket", "f1", "f2", "--config", "example_constant_curvature.cfg",
                 "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["results"]["bracket"]["F"] == "f1" and np.isfinite(rep["results"]["bracket"]["value"])


@pytest.mark.parametrize("name,code", [("gardner.cfg", 0), ("flat2d.cfg", 0),
                                       ("broken_gauss.cfg", 1), ("broken_gamma.cfg", 1)])
def test_classify_exit_codes(tmp_path, name, code):
    out = tmp_path / "r.json"
    assert main(["classify", "--config", name, "--trials", "3", "--out", str(out)]) == code
    verdict = json.loads(out.read_text())["verdict"]["poisson"]
    assert verdict == ("yes" if code == 0 else "no")


def test_gauss_defect_verdict_cites_the_gauss_equation(tmp_path):
    out = tmp_path / "r.json"
    main(["classify", "--config", "broken_gauss.cfg", "--trials", "3", "--out", str(out)])
    reasons = json.loads(out.read_text())["verdict"]["reasons"]
    assert any(r.startswith("GPC:2 fails with residual 2") for r in reasons), reasons


def test_runtime_and_config_errors_exit_with_two(tmp_path):
    assert main(["classify", "--config", str(tmp_path / "missing.cfg")]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("name = 'x'\n[chart]\nn = 0\n")
    assert main(["classify", "--config", str(bad)]) == 2
    syntax = tmp_path / "syntax.cfg"
    syntax.write_text("[chart\n")
    assert main(["classify", "--config", str(syntax)]) == 2


def test_invalid_semantics_give_exit_two_with_diagnostics(tmp_path):
    raw_text = resolve_config_path("flat2d.cfg").read_text()
    bad = tmp_path / "asym.cfg"
    bad.write_text(raw_text.replace('g = [["1", "0"], ["0", "1"]]', 'g = [["1", "u"], ["0", "1"]]'))
    assert "u" in bad.read_text()
    out = tmp_path / "r.json"
    assert main(["geometry-check", "--config", str(bad), "--out", str(out)]) == 2
    rep = json.loads(out.read_text())
    assert rep["diagnostics"] and rep["verdict"]["status"] == "invalid configuration"


def test_classify_is_deterministic():
    cfg = load_config("flat2d.cfg", {"trials": 3})
    a, _ = run(cfg, "classify")
    b, _ = run(load_config("flat2d.cfg", {"trials": 3}), "classify")
    assert dumps(strip_timing(dumps(a))) == dumps(strip_timing(dumps(b)))
    assert "timing" in a and "timing" not in strip_timing(dumps(a))
