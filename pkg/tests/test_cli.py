import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from nhcartan.cli import config_hash, load_config, main
from nhcartan.errors import ConfigError


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def numeric(rows):
    return np.array([[float(c) if c else np.nan for c in r] for r in rows])


OSC = {
    "schema": "nhcartan-scenario/1",
    "model": {"name": "harmonic_oscillator"},
    "initial": {"x": [1.0], "eta": [0.0]},
    "integrator": {"rtol": 1e-11, "atol": 1e-13, "sample_interval": 0.5},
    "horizon": 5.0,
}

INV = {
    "schema": "nhcartan-scenario/1",
    "model": {"name": "harmonic_oscillator"},
    "integrator": {"rtol": 1e-10, "atol": 1e-12},
    "horizon": 3.0,
    "loop": {"x": [0.0], "ystar": [0.0], "x_cos": [1.0], "y_sin": [1.0], "N": 64, "slides": 3,
             "convergence": False, "derivative": "fft"},
    "thresholds": {"max_drift": 1e-6},
}


class TestSimulate:
    def test_oscillator(self, tmp_path):
        out = tmp_path / "run"
        assert main(["simulate", write(tmp_path, OSC), "--out", str(out)]) == 0
        header, rows = read_csv(out / "trajectory.csv")
        data = numeric(rows)
        assert header == ["t", "x_1", "eta_1", "ystar_1", "Hstar"]
        assert np.array_equal(data[:, 0], np.arange(11) * 0.5)
        assert np.max(np.abs(data[:, 1] - np.cos(data[:, 0]))) < 1e-8
        meta = json.loads((out / "run.json").read_text())
        assert meta["config_hash"] == config_hash(OSC)
        assert meta["files"] == ["trajectory.csv", "run.json"]

    def test_constraint_residual_column(self, tmp_path):
        cfg = dict(OSC, model={"name": "quadratic_constraint_particle", "params": {"a": 0.5}},
                   initial={"eta": [0.3, 0.4]}, formulation="hamilton")
        out = tmp_path / "q"
        assert main(["simulate", write(tmp_path, cfg), "--out", str(out)]) == 0
        header, rows = read_csv(out / "trajectory.csv")
        data = numeric(rows)
        assert header[-1] == "constraint_residual_1"
        assert np.max(data[:, -1]) < 1e-8

    def test_reruns_are_byte_identical(self, tmp_path):
        p = write(tmp_path, OSC)
        main(["simulate", p, "--out", str(tmp_path / "a")])
        main(["simulate", p, "--out", str(tmp_path / "b")])
        for f in ("trajectory.csv", "run.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


class TestConfigErrors:
    @pytest.mark.parametrize("cfg", [
        {k: v for k, v in OSC.items() if k != "model"},
        dict(OSC, model={"name": "no_such_model"}),
        dict(OSC, model={"name": "knife_edge", "params": {"a": 0.0, "zzz": 1}}),
        dict(OSC, schema="other/2"),
        dict(OSC, extra=1),
        dict(OSC, initial={"x": [1.0, 2.0]}),
        dict(OSC, integrator={"method": "euler"}),
    ])
    def test_exit_2(self, tmp_path, cfg):
        assert main(["simulate", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["simulate", str(tmp_path / "absent.json")]) == 2
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.json"))

    def test_numerical_failure_exit_3(self, tmp_path):
        cfg = dict(OSC, integrator={"rtol": 1e-12, "max_steps": 5})
        assert main(["simulate", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3

    def test_hash_is_order_independent(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})


class TestInvariant:
    def test_pass(self, tmp_path, capsys):
        out = tmp_path / "inv"
        assert main(["invariant", write(tmp_path, INV), "--out", str(out)]) == 0
        header, rows = read_csv(out / "invariant_drift.csv")
        assert header == ["slide", "tau", "sigma", "I", "I1", "drift", "drift_I1"]
        assert [r[1] for r in rows] == ["constant"] * 4
        meta = json.loads((out / "run.json").read_text())
        assert meta["I0"] == pytest.approx(-np.pi, abs=1e-12)
        assert meta["max_drift"] < 1e-6 and meta["violations"] == []
        assert "max drift" in capsys.readouterr().out

    def test_threshold_violation_exit_4(self, tmp_path):
        # a non-uniform slide deforms the coarse loop, so its quadrature error changes
        cfg = dict(INV, loop=dict(INV["loop"], N=8, derivative="fd4",
                                  taus=[{"label": "sine", "base": 2.5, "amplitude": 0.5}]))
        out = tmp_path / "inv"
        assert main(["invariant", write(tmp_path, cfg), "--out", str(out)]) == 4
        assert json.loads((out / "run.json").read_text())["violations"]

    def test_convergence_table(self, tmp_path):
        cfg = dict(INV, loop=dict(INV["loop"], convergence=True, N=32))
        out = tmp_path / "inv"
        main(["invariant", write(tmp_path, cfg), "--out", str(out)])
        header, rows = read_csv(out / "convergence.csv")
        assert header == ["N", "max_drift"] and [r[0] for r in rows] == ["8", "16", "32"]

    def test_needs_loop(self, tmp_path):
        assert main(["invariant", write(tmp_path, OSC)]) == 2


class TestCheckAndList:
    def test_check_single_model(self, capsys):
        assert main(["check", "--model", "harmonic_oscillator", "--json"]) == 0
        rows = json.loads(capsys.readouterr().out)
        assert rows and {r["model"] for r in rows} == {"harmonic_oscillator"}
        assert all(r["passed"] is not False for r in rows)

    def test_check_unknown_model(self):
        assert main(["check", "--model", "nope"]) == 2

    def test_break_astar_fails(self, capsys):
        assert main(["check", "--model", "quadratic_constraint_particle", "--break-astar", "--json"]) == 1
        rows = json.loads(capsys.readouterr().out)
        assert any(r["check"] == "dalembert_residual" and r["passed"] is False for r in rows)

    def test_list_models(self, capsys):
        assert main(["list-models", "--json"]) == 0
        rows = json.loads(capsys.readouterr().out)
        assert len(rows) == 4
        assert main(["list-models"]) == 0
        assert "knife_edge" in capsys.readouterr().out

    def test_module_entry_point(self):
        r = subprocess.run([sys.executable, "-m", "nhcartan", "list-models"], capture_output=True, text=True)
        assert r.returncode == 0 and "free_rigid_body" in r.stdout

    def test_usage_error(self):
        assert main(["frobnicate"]) == 2
