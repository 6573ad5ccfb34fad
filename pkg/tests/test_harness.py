from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odefit import bench
from odefit.config import LARGE_N, dumps, load_config, parse_config, to_dict
from odefit.errors import ConfigError, DegenerateDataError


def small_config(**overrides):
    base = {
        "name": "lv_small",
        "source": "lotka_volterra",
        "sampling": {"t_end": 5.0, "n": 200},
        "delta": 0.0,
        "seeds": [0],
        "methods": ["vrkhs"],
        "vrkhs": {"kernel": {"family": "gaussian", "length_scale": 0.5}},
    }
    base.update(overrides)
    return base


class TestRelativeL2:
    def test_examples(self, rng):
        truth = rng.normal(size=(20, 3))
        assert bench.relative_l2_error(truth, truth) == 0.0
        assert bench.relative_l2_error(np.zeros_like(truth), truth) == pytest.approx(1.0, abs=1e-15)
        assert bench.relative_l2_error(1.1 * truth, truth) == pytest.approx(0.1, abs=1e-12)

    def test_zero_truth(self):
        with pytest.raises(DegenerateDataError):
            bench.relative_l2_error(np.ones(3), np.zeros(3))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            bench.relative_l2_error(np.ones(3), np.ones(4))

    @settings(max_examples=30)
    @given(seed=st.integers(0, 10**6), c1=st.floats(0, 10), dc=st.floats(1e-3, 10))
    def test_monotone_in_error_scale(self, seed, c1, dc):
        rng = np.random.default_rng(seed)
        truth, e = rng.normal(size=(2, 10, 2))
        assert bench.relative_l2_error(truth + c1 * e, truth) < bench.relative_l2_error(truth + (c1 + dc) * e, truth)


class TestConfig:
    def test_bundled_suites_parse(self):
        suites = bench.bundled_suites()
        assert len(suites) == 6
        assert all(s.entries for s in suites)

    def test_defaults_materialized(self):
        cfg = parse_config(small_config())
        d = to_dict(cfg)
        assert d["tv"]["n_alpha"] == 20
        assert d["dynlearn"]["kernel"]["length_scale"] == 1000.0
        assert d["sampling"]["mode"] == "uniform"

    def test_round_trip(self):
        for suite in bench.bundled_suites():
            for entry in suite.entries:
                text = dumps(entry.config)
                again = parse_config(json.loads(text), allow_large=True)
                assert again == entry.config
                assert dumps(again) == text

    @pytest.mark.parametrize("patch,match", [
        ({"colour": "red"}, "unknown keys"),
        ({"sampling": {"t_end": 5.0, "n": 200, "step": 1}}, "unknown keys"),
        ({"delta": "0.1"}, "does not match"),
        ({"seeds": [0, 0]}, "distinct"),
        ({"seeds": [True]}, "seeds"),
        ({"methods": ["vrkhs", "gp"]}, "methods"),
        ({"source": "duffing"}, "source"),
        ({"vrkhs": {"kernel": {"family": "matern", "length_scale": 1.0}}}, "nu"),
        ({"methods": ["fd", "sindy"]}, "vrkhs"),
        ({"methods": ["vrkhs", "dynlearn"]}, "region"),
        ({"methods": ["tv"], "sampling": {"t_end": 5.0, "n": 200, "mode": "random"}}, "uniform"),
        ({"delta": -1.0}, "delta"),
        ({"x0": [1.0]}, "x0"),
        ({"parameters": {"mu": 1.0}}, "unknown parameters"),
        ({"sampling": {"t_end": 5.0, "n": 0}}, "n must"),
        ({"delta": float("nan")}, "does not match"),
    ])
    def test_rejections(self, patch, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(small_config(**patch))

    def test_missing_required(self):
        data = small_config()
        del data["delta"]
        with pytest.raises(ConfigError, match="delta"):
            parse_config(data)

    def test_large_guard(self):
        data = small_config(sampling={"t_end": 5.0, "n": LARGE_N + 1})
        with pytest.raises(ConfigError, match="allow-large"):
            parse_config(data)
        assert parse_config(data, allow_large=True).sampling.n == LARGE_N + 1

    def test_int_accepted_for_float(self):
        cfg = parse_config(small_config(delta=1))
        assert isinstance(cfg.delta, float)

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(bad)


class TestThreads:
    def test_resolution(self, monkeypatch):
        monkeypatch.delenv("ODEFIT_THREADS", raising=False)
        assert bench.resolve_threads(None) == 1
        assert bench.resolve_threads(3) == 3
        monkeypatch.setenv("ODEFIT_THREADS", "4")
        assert bench.resolve_threads(None) == 4
        assert bench.resolve_threads(2) == 2
        monkeypatch.setenv("ODEFIT_THREADS", "many")
        with pytest.raises(ConfigError):
            bench.resolve_threads(None)
        with pytest.raises(ConfigError):
            bench.resolve_threads(0)


class TestRunExperiment:
    def test_noise_free_trajectory(self, tmp_path):
        report = bench.run_experiment(parse_config(small_config()), tmp_path)
        assert report.mean("vrkhs", "traj_error") <= 1e-4
        assert report.mean("vrkhs", "consistency_max_abs") <= 1e-7
        assert report.mean("vrkhs", "lcurve_monotone") == 1.0
        for name in ("effective_config.json", "errors.csv", "summary.csv", "lcurve_seed0.csv",
                     "fits/vrkhs_seed0.csv"):
            assert (tmp_path / name).is_file()
        header = (tmp_path / "errors.csv").read_text().splitlines()[0]
        assert header == "seed,method,metric,value"

    def test_sindy_parameter_column(self, tmp_path):
        cfg = parse_config(small_config(
            methods=["vrkhs", "sindy"], delta=0.1, sindy={"threshold": 0.005},
            sampling={"t_end": 10.0, "n": 400}, region=[[50, 300], [50, 300]],
        ))
        report = bench.run_experiment(cfg, tmp_path)
        assert np.isfinite(report.mean("sindy", "param_error"))
        assert "sindy,param_error" in (tmp_path / "summary.csv").read_text()

    def test_all_methods_on_cos(self, tmp_path):
        cfg = parse_config({
            "name": "cos_small", "source": "cos", "delta": 0.01, "seeds": [0, 1],
            "sampling": {"t_start": -0.5, "t_end": 0.5, "n": 100},
            "methods": ["vrkhs", "fd", "tv"], "tv": {"n_alpha": 5},
            "vrkhs": {"kernel": {"family": "gaussian", "length_scale": 3.0}},
        })
        report = bench.run_experiment(cfg, tmp_path)
        assert report.values("vrkhs", "deriv_error").size == 2
        assert report.mean("vrkhs", "deriv_error") < report.mean("fd", "deriv_error")
        assert (tmp_path / "fits" / "tv_seed1.csv").is_file()

    def test_dynlearn_outputs(self, tmp_path):
        cfg = parse_config(small_config(
            methods=["vrkhs", "dynlearn"], delta=0.5, region=[[50, 300], [50, 300]], field_n_grid=2000,
            dynlearn={"predict_t_end": 3.0, "predict_n_out": 30, "predict_check_t": 2.0},
        ))
        report = bench.run_experiment(cfg, tmp_path)
        assert report.mean("dynlearn", "field_error") < 0.5
        assert report.mean("dynlearn", "predict_error") < 0.1
        assert (tmp_path / "fits" / "prediction_seed0.csv").is_file()

    def test_byte_identical_and_thread_independent(self, tmp_path):
        cfg = parse_config(small_config(seeds=[0, 1, 2], delta=0.5, methods=["vrkhs", "fd"],
                                        sampling={"t_end": 5.0, "n": 100, "mode": "random"}))
        bench.run_experiment(cfg, tmp_path / "a", threads=1)
        bench.run_experiment(cfg, tmp_path / "b", threads=1)
        bench.run_experiment(cfg, tmp_path / "c", threads=3)
        for name in ("errors.csv", "summary.csv", "lcurve_seed1.csv", "fits/vrkhs_seed2.csv"):
            a = (tmp_path / "a" / name).read_bytes()
            assert a == (tmp_path / "b" / name).read_bytes()
            assert a == (tmp_path / "c" / name).read_bytes()

    def test_failure_names_stage(self):
        cfg = parse_config(small_config(x0=[0.0, 0.0]))
        with pytest.raises(DegenerateDataError, match="seed 0"):
            bench.run_experiment(cfg)


class TestSuites:
    def test_load_suite_rejects_bad_keys(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"name": "s", "experiments": [{"config": small_config(), "limits": {"bad": 1}}]}))
        with pytest.raises(ConfigError, match="method/metric"):
            bench.load_suite(p)
        p.write_text(json.dumps({"name": "s", "experiments": []}))
        with pytest.raises(ConfigError, match="no experiments"):
            bench.load_suite(p)

    def test_reproduce_isolates_failures(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"name": "mini", "experiments": [
            {"config": small_config(name="broken", x0=[0.0, 0.0]), "limits": {"vrkhs/deriv_error": 1.0}},
            {"config": small_config(name="ok", delta=0.1), "limits": {"vrkhs/deriv_error": 1.0},
             "less_than": [["vrkhs/deriv_error", "vrkhs/traj_error"]]},
        ]}))
        reports, rows, passed = bench.reproduce_all(tmp_path / "out", [bench.load_suite(p)])
        checks = {(r[1], r[2]): r[7] for r in rows}
        assert checks[("broken", "vrkhs")] == "failed"
        assert checks[("ok", "vrkhs")] == "pass"
        assert not passed
        assert ("mini", "ok") in reports
        text = (tmp_path / "out" / "summary.csv").read_text()
        assert text.startswith("suite,experiment,method,metric,mean,reference,limit,check")
