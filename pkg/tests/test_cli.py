from __future__ import annotations

import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from odefit import bench, cli


def write_config(path, **overrides):
    data = {
        "name": "lv_cli",
        "source": "lotka_volterra",
        "sampling": {"t_end": 5.0, "n": 120},
        "delta": 0.5,
        "seeds": [0, 1],
        "methods": ["vrkhs", "fd"],
        "vrkhs": {"kernel": {"family": "gaussian", "length_scale": 0.5}},
        "region": [[50, 300], [50, 300]],
        "field_n_grid": 2000,
        "sindy": {"threshold": 0.005},
    }
    data.update(overrides)
    path.write_text(json.dumps(data))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_simulate_then_fit_and_learn(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")]) == 0
    header, data = read_csv(tmp_path / "sim" / "data_seed0.csv")
    assert header == ["t", "y1", "y2"]
    assert data.shape == (121, 3)
    np.testing.assert_array_equal(data[0], [0.0, 70.0, 50.0])
    header, truth = read_csv(tmp_path / "sim" / "truth_seed1.csv")
    assert header == ["t", "x1", "x2", "dx1", "dx2"]

    out = tmp_path / "fit"
    assert cli.main(["fit", "--data", str(tmp_path / "sim" / "data_seed0.csv"), "--out", str(out),
                     "--length-scale", "0.5"]) == 0
    header, fitted = read_csv(out / "fit.csv")
    assert header == ["t", "dx1", "dx2", "x1", "x2"]
    assert bench.relative_l2_error(fitted[:, 3:], truth[:, 1:3]) < 0.05
    lheader, lcurve = read_csv(out / "lcurve.csv")
    assert lheader == ["lambda", "residual_norm", "seminorm", "curvature"]
    assert lcurve.shape == (200, 4)

    out = tmp_path / "learn"
    assert cli.main(["learn", "--data", str(tmp_path / "sim" / "data_seed0.csv"), "--out", str(out),
                     "--length-scale", "0.5", "--state-length-scale", "1000"]) == 0
    header, model = read_csv(out / "field_model.csv")
    assert header == ["c1", "c2", "v1", "v2"]
    assert model.shape == (120, 4)


@pytest.mark.parametrize("command,extra", [
    ("fit", []),
    ("bench", []),
    ("baseline", ["--method", "fd"]),
    ("baseline", ["--method", "sindy"]),
    ("learn", []),
])
def test_config_commands(tmp_path, capsys, command, extra):
    cfg = write_config(tmp_path / "c.json")
    out = tmp_path / "out"
    assert cli.main([command, "--config", str(cfg), "--out", str(out), "--seed", "1", *extra]) == 0
    assert (out / "effective_config.json").is_file()
    effective = json.loads((out / "effective_config.json").read_text())
    assert effective["seeds"] == [1]
    assert "mean" in capsys.readouterr().out


def test_exit_code_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"name": "x", "source": "lorenz63", "delta": 0.1, "typo": 1,
                               "sampling": {"t_end": 1.0, "n": 10}}))
    assert cli.main(["bench", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "typo" in capsys.readouterr().err


def test_exit_code_usage_error():
    with pytest.raises(SystemExit) as info:
        cli.main(["bench", "--out", "x"])
    assert info.value.code == 1


def test_exit_code_missing_input(tmp_path):
    assert cli.main(["fit", "--out", str(tmp_path)]) == 1
    assert cli.main(["fit", "--data", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 1


def test_exit_code_numerical_failure(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", x0=[0.0, 0.0])
    assert cli.main(["bench", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "numerical failure" in err and "seed 0" in err


def test_large_guard(tmp_path):
    cfg = write_config(tmp_path / "c.json", sampling={"t_end": 5.0, "n": 9000})
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_reproduce_exit_codes(tmp_path, monkeypatch):
    def suite(limit):
        path = tmp_path / f"suite_{limit}.json"
        path.write_text(json.dumps({"name": "mini", "experiments": [{
            "config": json.loads(write_config(tmp_path / "c.json", seeds=[0]).read_text()),
            "limits": {"vrkhs/deriv_error": limit},
        }]}))
        return bench.load_suite(path)

    monkeypatch.setattr(bench, "bundled_suites", lambda: [suite(10.0)])
    assert cli.main(["reproduce", "--out", str(tmp_path / "r1")]) == 0
    monkeypatch.setattr(bench, "bundled_suites", lambda: [suite(1e-9)])
    assert cli.main(["reproduce", "--out", str(tmp_path / "r2")]) == 3
    assert cli.main(["reproduce", "--out", str(tmp_path / "r3"), "--suite", "nope"]) == 1


@pytest.mark.skipif(shutil.which("odefit") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["odefit", "--help"], capture_output=True, text=True, check=False)
    assert res.returncode == 0
    for name in ("simulate", "fit", "learn", "baseline", "bench", "reproduce"):
        assert name in res.stdout
