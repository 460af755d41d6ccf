import json

import numpy as np
import pytest
import yaml

from robust_hedge.cli import EXIT_ALARM, EXIT_INPUT, EXIT_OK, main
from robust_hedge.config import DEFAULTS, parse_config, payoff_from_shorthand, validate
from robust_hedge.errors import ConfigError
from robust_hedge import Payoff
from robust_hedge.pricing import price

SHORT_CALL = {"kind": "piecewise_linear", "knots": [100.0], "weights": [-1.0]}


def problems(raw):
    with pytest.raises(ConfigError) as ei:
        validate(raw)
    return ei.value.problems


def test_defaults_fill_minimal_config():
    cfg = validate({"model": {"sigma": 0.25}})
    assert cfg.section("model")["sigma"] == 0.25
    assert cfg.section("strategy") == DEFAULTS["strategy"]
    assert cfg.checkpoints == [DEFAULTS["grid"]["horizon"]]
    assert json.loads(cfg.to_json())["model"]["sigma"] == 0.25


def test_concave_alpha_rule_message():
    p = problems({"payoff": SHORT_CALL, "strategy": {"alpha": 1.5}})
    assert len(p) == 1 and p[0].startswith("strategy.alpha") and "alpha > 2" in p[0]
    validate({"payoff": SHORT_CALL, "strategy": {"alpha": 3.0}})


def test_all_problems_reported_together():
    p = problems({"strategy": {"kappa": -1, "bogus": 1}, "run": {"paths": 0}, "model": {"sigma": 0}})
    joined = "\n".join(p)
    for key in ("strategy.bogus", "strategy.kappa", "run.paths", "model.sigma"):
        assert key in joined
    assert len(p) == 4


@pytest.mark.parametrize("raw,key", [
    ({"nonsense": {}}, "nonsense"),
    ({"payoff": {"kind": "piecewise_linear", "knots": [90, 110], "weights": [1, -1]}}, "weights"),
    ({"payoff": {"kind": "smooth", "expr": "2*s + 1"}}, "affine"),
    ({"strategy": {"kind": "leland", "n": 100}, "payoff": SHORT_CALL}, "convex"),
    ({"run": {"checkpoints": [0.9]}}, "checkpoints"),
    ({"output": {"formats": ["xml"]}}, "formats"),
])
def test_invalid_configs(raw, key):
    assert any(key in p for p in problems(raw))


def test_parse_config_yaml_and_json():
    text = "model:\n  sigma: 0.3\nrun:\n  paths: 5\n"
    assert parse_config(text).section("run")["paths"] == 5
    assert parse_config(json.dumps({"model": {"sigma": 0.3}})).section("model")["sigma"] == 0.3


def test_payoff_shorthand():
    assert payoff_from_shorthand("call:90") == {"kind": "call", "strike": 90.0}
    assert payoff_from_shorthand("put:110")["kind"] == "put"
    assert payoff_from_shorthand("smooth:s**2")["expr"] == "s**2"
    with pytest.raises(ConfigError):
        payoff_from_shorthand("digital:100")


# -- CLI ----------------------------------------------------------------------
def write_cfg(tmp_path, body):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(body))
    return str(p)


def test_cli_price_json(capsys):
    assert main(["price", "--payoff", "call:100", "--S", "100", "--Sigma", "0.04"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["price"] == pytest.approx(price(Payoff.call(100), 100.0, 0.0, 0.04))
    assert max(abs(v) for v in out["residuals"].values()) < 1e-6
    for k in ("delta", "gamma", "dP_dSigma", "dP_dR"):
        assert k in out


def test_cli_rejects_bad_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"payoff": SHORT_CALL, "strategy": {"alpha": 1.5}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert "alpha > 2" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == EXIT_INPUT
    assert main(["simulate", "--threads", "0"]) == EXIT_INPUT


def test_cli_simulate_outputs_and_thread_invariance(tmp_path):
    body = {"grid": {"steps": 1000, "horizon": 0.5}, "run": {"paths": 30, "master_seed": 7},
            "strategy": {"kappa": 0.02}, "output": {"dump_paths": True}}
    cfg = write_cfg(tmp_path, body)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(a)]) == EXIT_OK
    assert main(["simulate", "--config", cfg, "--out", str(b), "--threads", "3"]) == EXIT_OK
    assert (a / "simulate.csv").read_bytes() == (b / "simulate.csv").read_bytes()
    summary = json.loads((a / "simulate.json").read_text())
    assert summary["config"]["run"]["master_seed"] == 7
    assert summary["paths"] == 30
    assert len(list((a / "paths").glob("*.csv"))) == 30
    meta = json.loads((b / "simulate.meta.json").read_text())
    assert meta["threads"] == 3 and meta["exit_status"] == 0


def test_cli_seed_override_changes_results(tmp_path):
    cfg = write_cfg(tmp_path, {"grid": {"steps": 500}, "run": {"paths": 5}, "output": {"formats": ["csv"]}})
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a/simulate.csv").read_bytes() != (tmp_path / "b/simulate.csv").read_bytes()
    assert not (tmp_path / "a/simulate.json").exists()


def test_cli_alarm_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, {"grid": {"steps": 100}, "run": {"paths": 3}, "strategy": {"kappa": 0.005}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_ALARM
    assert "grid_resolution_alarm" in json.loads((tmp_path / "o/simulate.json").read_text())["flags"]


def test_cli_converge(tmp_path):
    cfg = write_cfg(tmp_path, {"grid": {"steps": 1000, "horizon": 0.5},
                               "run": {"paths": 20, "kappa_ladder": [0.04, 0.02], "checkpoints": [0.25, 0.5]}})
    assert main(["converge", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    for k in ("0.04", "0.02"):
        rows = (tmp_path / f"o/converge_kappa_{k}.csv").read_text().splitlines()
        assert len(rows) == 1 + 20 * 2
    rep = json.loads((tmp_path / "o/converge.json").read_text())
    assert len(rep["cells"]) == 4
    assert rep["targets"]["var_ratio"] == 1.0


def test_cli_compare_leland(tmp_path):
    cfg = write_cfg(tmp_path, {"grid": {"steps": 1000, "horizon": 0.5},
                               "run": {"paths": 10, "n_ladder": [100], "kappa0": 0.15}})
    assert main(["compare-leland", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    rep = json.loads((tmp_path / "o/compare_leland.json").read_text())
    row = rep["rows"][0]
    assert row["n"] == 100 and row["target_ratio"] == pytest.approx(1.031, abs=1e-3)
    assert (tmp_path / "o/compare_leland_n100.csv").exists()


def test_cli_compare_leland_requires_zero_rate(tmp_path):
    cfg = write_cfg(tmp_path, {"model": {"rate": 0.05}, "run": {"paths": 2}})
    assert main(["compare-leland", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_INPUT
