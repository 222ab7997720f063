import json
import math

import numpy as np
import pytest
from scipy import integrate

from dini_reglab.cli import main
from dini_reglab.errors import DomainError, PreconditionError
from dini_reglab.experiments import (ExperimentConfig, bmo_slope_prediction, eta_cutoff, run_experiment,
                                     write_rows)
from dini_reglab.plots import emit_plots, svg_plot


def test_config_derives_q_and_rejects_inconsistent_q():
    assert ExperimentConfig("w21-blowup", p=3.0).q == pytest.approx(2.0)
    assert ExperimentConfig("w21-blowup", p=1.5).q == pytest.approx(1.5)
    with pytest.raises(PreconditionError):
        ExperimentConfig("w21-blowup", p=3.0, q=3.0)


def test_config_rejects_bad_regions_and_params():
    with pytest.raises(DomainError):
        ExperimentConfig("w21-blowup", regions=[{"center": [0.5, 0.0], "radius": 0.5}])
    with pytest.raises(PreconditionError):
        ExperimentConfig("w21-blowup", params={"no_such": 1})
    with pytest.raises(PreconditionError):
        ExperimentConfig("not-an-experiment")


def test_config_meshes_accept_fractions_and_hash_ignores_out():
    a = ExperimentConfig("cz-constant", meshes=["1/32", 0.015625], out="x")
    b = ExperimentConfig("cz-constant", meshes=[1 / 32, "1/64"], out="y")
    assert a.meshes == [1 / 32, 1 / 64]
    assert a.hash == b.hash
    assert a.hash != ExperimentConfig("cz-constant", meshes=[1 / 32], seed=1).hash


def test_config_load_checks_experiment(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"experiment": "modulus-check", "params": {"n_samples": 50}}))
    assert ExperimentConfig.load(path, "modulus-check").params["n_samples"] == 50
    with pytest.raises(PreconditionError):
        ExperimentConfig.load(path, "w21-blowup")


def test_reports_are_bit_identical(tmp_path):
    cfg = ExperimentConfig("w21-blowup")
    r1, r2 = run_experiment(cfg), run_experiment(cfg)
    r1.write(tmp_path / "a")
    r2.write(tmp_path / "b")
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()
    p1, p2 = emit_plots(r1, tmp_path / "a"), emit_plots(r2, tmp_path / "b")
    assert [p.read_bytes() for p in p1] == [p.read_bytes() for p in p2]
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["provenance"]["config_hash"] == cfg.hash


def test_write_rows_uses_union_of_keys(tmp_path):
    path = tmp_path / "t.csv"
    write_rows(path, [{"a": 1, "b": 0.1}, {"a": 2, "c": "x"}])
    lines = path.read_text().splitlines()
    assert lines[0] == "a,b,c"
    assert lines[1] == "1,0.1,"


def test_svg_empty_series_keeps_axes():
    text = svg_plot("empty", [("nothing", [], [])], "x", "y", logx=True, logy=True)
    assert "<svg" in text and "empty" in text and "<rect" in text and "polyline" not in text
    assert svg_plot("t", [("s", [1, 2], [3, 4])]) == svg_plot("t", [("s", [1, 2], [3, 4])])


def test_eta_cutoff_profile():
    x = np.array([[0.0, 0.0], [0.2, 0.0], [0.6, 0.0], [0.3, 0.2]])
    e = eta_cutoff(x)
    assert e[0] == 1.0 and e[1] == 1.0 and e[2] == 0.0
    assert 0 < e[3] < 1


def test_bmo_slope_prediction_matches_double_integral():
    # mean absolute deviation of s + sin^2(2 theta)/2, s ~ Exp(2), theta uniform; the mean is 3/4
    inner = lambda s, th: 2 * math.exp(-2 * s) * abs(s + math.sin(2 * th) ** 2 / 2 - 0.75) / (2 * math.pi)
    val = 0.0
    for a, b in ((0, math.pi / 4), (math.pi / 4, math.pi / 2)):
        part, _ = integrate.dblquad(inner, a, b, 0, 40, epsabs=1e-13, epsrel=1e-11)
        val += 4 * part  # sin^2(2 theta) has period pi/2
    assert bmo_slope_prediction() == pytest.approx(2 * math.log(2) * val, rel=1e-7)


def test_cli_modulus_check(capsys):
    assert main(["modulus", "check", "power:0.5", "log_inverse:1"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["dini"] for r in rows] == ["convergent", "divergent"]
    assert rows[0]["total"] == pytest.approx(2.0, rel=1e-8)
    assert main(["modulus", "check", "power:beta=0.5"]) == 1


def test_cli_exit_codes(tmp_path):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"experiment": "modulus-check",
                                "expect": {"dini log_inverse(c=1)": "divergent"}}))
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"experiment": "modulus-check",
                               "expect": {"dini log_inverse(c=1)": "convergent"}}))
    out = str(tmp_path / "out")
    assert main(["modulus-check", "--config", str(good), "--out", out, "--expect"]) == 0
    assert main(["modulus-check", "--config", str(bad), "--out", out, "--expect"]) == 2
    assert main(["modulus-check", "--config", str(tmp_path / "missing.json"), "--out", out]) == 1
    assert main(["no-such-command"]) == 1
    assert (tmp_path / "out" / "report.csv").exists() and (tmp_path / "out" / "moduli.svg").exists()


def test_cli_probe_lp_ratio(capsys):
    assert main(["probe", "lp", "--p", "2", "--levels", "20"]) == 0
    text = capsys.readouterr().out
    verdict = json.loads(text[text.index("\n\n") + 2:])
    assert verdict["verdict"] == "divergent"
    assert verdict["fitted_ratio"] == pytest.approx(4.0, rel=0.1)


def test_cli_counterexample_csv(capsys):
    assert main(["counterexample", "w21", "--samples", "50"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "r" in lines[0].split(",")
    assert len(lines) == 51


def test_cli_solve_accepts_fractional_mesh(capsys):
    assert main(["solve", "--coeff", "holder:0.5", "--h", "1/16", "--rhs", "random:3"]) == 0
    assert json.loads(capsys.readouterr().out)["rel_residual"] < 1e-10
