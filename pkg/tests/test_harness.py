import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusdamp import harness
from torusdamp.harness import (EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, KINDS, ConfigError,
                               ExperimentConfig, main, run)

DISK5 = {"kind": "disk", "center": [0.0, 0.0], "r0": 1.0, "beta": 5.0, "amplitude": 1.0}


def read_csv(path):
    lines = path.read_text().splitlines()
    head = lines[0].split(",")
    return [dict(zip(head, l.split(","))) for l in lines[1:]]


def test_kinds_and_parser():
    assert set(KINDS) == set(harness.RUNNERS)
    p = harness.build_parser()
    for kind in KINDS:
        ns = p.parse_args([kind, "--seed", "3", "--threads", "2", "--out", "x"])
        assert ns.kind == kind and ns.seed == 3 and ns.threads == 2


def test_config_round_trip():
    cfg = ExperimentConfig(kind="resolvent2d", damping=DISK5, h_list=[0.2, 0.1], seed=9)
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(KINDS), st.lists(st.floats(0.01, 0.99), min_size=1, max_size=6),
       st.floats(0.01, 1.0), st.integers(0, 2**31), st.integers(2, 64))
def test_config_round_trip_property(kind, hs, tol, seed, K):
    cfg = ExperimentConfig(kind=kind, h_list=hs, tolerance=tol, seed=seed, K=K).validate()
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


@pytest.mark.parametrize("patch,field", [
    ({"kind": "nope"}, "kind"),
    ({"h_list": [0.2, 1.5]}, "h_list"),
    ({"K_rule": "ceil9"}, "K_rule"),
    ({"damping": {"kind": "disk", "r0": 9.0, "beta": 5}}, "damping"),
    ({"K": 1}, "K"),
    ({"dt": -1.0}, "dt"),
    ({"window": [0.1, 0.01]}, "window"),
    ({"threads": -2}, "threads"),
])
def test_validation_names_field(patch, field):
    cfg = ExperimentConfig(**dict({"kind": "decay"}, **patch))
    with pytest.raises(ConfigError) as info:
        cfg.validate()
    assert info.value.field == field


def test_unknown_and_missing_fields():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"kind": "decay", "colour": 1})
    assert info.value.field == "colour"
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"h_list": [0.1]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("[1, 2]")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{not json")


def test_zero_damping_matches_closed_form(tmp_path):
    cfg = ExperimentConfig(kind="resolvent2d", h_list=[0.19, 0.15, 0.12, 0.095, 0.075])
    code, res = run(cfg, tmp_path)
    assert code == EXIT_OK
    rows = read_csv(tmp_path / "resolvent2d.csv")
    assert len(rows) == 5
    for r in rows:
        h, K = float(r["h"]), int(r["K"])
        n = np.arange(-K, K + 1) ** 2
        exact = 1 / np.min(np.abs(h * h * np.add.outer(n, n) - 1))
        assert float(r["resolvent_norm"]) == pytest.approx(exact, rel=1e-12)
        assert float(r["closed_form"]) == float(r["resolvent_norm"])


def test_averaging_summary(tmp_path):
    cfg = ExperimentConfig(kind="averaging", damping=DISK5, grid_n=8192)
    code, _ = run(cfg, tmp_path)
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "averaging.json").read_text())
    assert summary["predicted"] == 5.5
    assert summary["prediction_formula"] == "beta + 1/2"
    assert summary["quantity"]
    for side in ("left", "right"):
        assert summary["fit"][side]["exponent"] == pytest.approx(5.5, abs=0.1)
    assert summary["config"]["damping"] == DISK5
    report = (tmp_path / "averaging.txt").read_text()
    assert "beta + 1/2" in report


def test_determinism(tmp_path):
    cfg = ExperimentConfig(kind="resolvent2d", seed=4, K_rule="ceil2+4",
                           damping={"kind": "disk", "r0": 2.5, "beta": 5, "amplitude": 2.5**-5},
                           h_list=[0.3, 0.25, 0.22, 0.2, 0.18])
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    a = (tmp_path / "a" / "resolvent2d.csv").read_bytes()
    assert a == (tmp_path / "b" / "resolvent2d.csv").read_bytes()
    h = [float(r["h"]) for r in read_csv(tmp_path / "a" / "resolvent2d.csv")]
    assert h == sorted(h, reverse=True)


def test_numerical_failure_keeps_partial_output(tmp_path):
    # exact resonance at h = 0.5 makes that point singular
    cfg = ExperimentConfig(kind="resolvent2d", h_list=[0.5, 0.3, 0.2], shift=1.0)
    code, res = run(cfg, tmp_path)
    assert code == EXIT_NUMERIC
    assert len(res.rows) == 2 and len(res.failures) == 1
    summary = json.loads((tmp_path / "resolvent2d.json").read_text())
    assert summary["exit_code"] == EXIT_NUMERIC
    assert "Singular" in summary["failures"][0]["error"]


def test_averaging_without_damping_fails_numerically(tmp_path):
    code, res = run(ExperimentConfig(kind="averaging"), tmp_path)
    assert code == EXIT_NUMERIC and res.failures


def test_wrong_damping_kind_is_config_error(tmp_path):
    code, res = run(ExperimentConfig(kind="resolvent1d", damping=DISK5), tmp_path)
    assert code == EXIT_CONFIG and res is None


def test_generator_and_decay_runs(tmp_path):
    code, res = run(ExperimentConfig(kind="generator-spectrum", K=6, damping=DISK5), tmp_path)
    assert code == EXIT_OK
    assert res.summary["max_real_part"] <= 1e-8
    code, res = run(ExperimentConfig(kind="decay", K=8, T=5.0, dt=0.02,
                                     damping={"kind": "constant", "value": 1.0}), tmp_path)
    assert code == EXIT_OK and res.summary["strictly_decreasing"]
    assert (tmp_path / "decay.csv").read_text().startswith("t,E,ratio")


def test_main_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "decay", "K": 0}))
    assert main(["decay", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "'K'" in capsys.readouterr().err
    assert main(["averaging", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["decay", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"kind": "resolvent2d", "h_list": [0.19, 0.15, 0.12, 0.095]}))
    assert main(["resolvent2d", "--config", str(good), "--out", str(tmp_path / "o"),
                 "--seed", "1", "--threads", "1"]) == EXIT_OK
    assert "resolvent2d" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "generator-spectrum", "K": 4}))
    out = subprocess.run([sys.executable, "-m", "torusdamp", "generator-spectrum", "--config",
                          str(cfg), "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == EXIT_OK, out.stderr
    assert (tmp_path / "generator-spectrum.csv").exists()
