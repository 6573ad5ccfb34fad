"""Benchmark harness: data generation, method runs, error metrics, CSV output.

:func:`run_experiment` executes one :class:`~odefit.config.ExperimentConfig`
over its seeds and writes

* ``errors.csv``: long format ``seed,method,metric,value``,
* ``summary.csv``: per method and metric, the mean and sample standard
  deviation over seeds,
* ``fits/<method>_seed<k>.csv``: true and estimated curves for plotting,
* ``lcurve_seed<k>.csv``: the L-curve trace of every vRKHS fit,
* ``effective_config.json``: the parsed config with all defaults.

:func:`reproduce_all` runs the bundled suites and compares their means with
the stored limits.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import threading
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import systems
from .baselines import finite_difference, poly_library, stls, tv_derivative
from .config import ExperimentConfig, dumps, parse_config
from .derivfit import TimeSeries, TrajectoryFit, fit, trajectory_from_quadrature
from .dynlearn import field_relative_l2, learn, predict
from .errors import ConfigError, DegenerateDataError, IntegrationError, OdefitError
from .kernels import gram_g1
from .numerics import sym_eig

__all__ = [
    "relative_l2_error",
    "Dataset",
    "generate_data",
    "sindy_parameters",
    "ExperimentReport",
    "run_experiment",
    "load_suite",
    "bundled_suites",
    "reproduce_all",
    "resolve_threads",
]

log = logging.getLogger(__name__)

FLOAT_FMT = "%.9e"
_CONSISTENCY_STREAM = 3


def relative_l2_error(estimate, truth) -> float:
    """``sqrt(sum ||e_i - t_i||^2) / sqrt(sum ||t_i||^2)`` over all rows."""
    e = np.asarray(estimate, dtype=float)
    t = np.asarray(truth, dtype=float)
    if e.shape != t.shape:
        raise ValueError(f"shape mismatch: {e.shape} vs {t.shape}")
    denom = np.linalg.norm(t)
    if denom == 0:
        raise DegenerateDataError("truth is identically zero; relative error undefined")
    return float(np.linalg.norm(e - t) / denom)


def resolve_threads(threads: int | None) -> int:
    """Explicit value, else ``ODEFIT_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("ODEFIT_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError as exc:
                raise ConfigError(f"ODEFIT_THREADS must be an integer, got {env!r}") from exc
        else:
            threads = 1
    if threads < 1:
        raise ConfigError("thread count must be positive")
    return threads


# Data ========================================================================
@dataclass(frozen=True)
class Dataset:
    """One noisy realization with its ground truth.

    ``series`` holds the noisy observations; ``clean`` and ``derivs`` are
    the true states and derivatives at ``series.times``.
    """

    series: TimeSeries
    clean: np.ndarray
    derivs: np.ndarray
    system: systems.OdeSystem | None


def _x0(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.source == "cos":
        return np.array([math.cos(cfg.sampling.t_start)])
    if cfg.x0 is not None:
        return np.asarray(cfg.x0, dtype=float)
    if cfg.source == "lorenz96":
        # forcing value everywhere, first site nudged by 0.01
        forcing = float(cfg.parameters.get("F", systems.DEFAULT_PARAMETERS["lorenz96"]["F"]))
        x0 = np.full(cfg.dimension, forcing)
        x0[0] += 0.01
        return x0
    return np.asarray(systems.DEFAULT_X0[cfg.source], dtype=float)


def sample_times(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    s = cfg.sampling
    return s.t_start + systems.sample_times(s.t_end - s.t_start, s.n, s.mode, seed)


def generate_data(cfg: ExperimentConfig, seed: int) -> Dataset:
    """Sample times, exact states and derivatives, and noisy observations."""
    times = sample_times(cfg, seed)
    x0 = _x0(cfg)
    if cfg.source == "cos":
        clean = np.cos(times)[:, None]
        derivs = -np.sin(times)[:, None]
        system = None
    else:
        system = systems.make_system(cfg.source, cfg.parameters or None)
        clean = systems.integrate(system, x0, times, tol=cfg.integrator_tol, t0=cfg.sampling.t_start)
        derivs = system(clean)
    noisy = systems.add_noise(clean, cfg.delta, seed)
    return Dataset(TimeSeries(times, noisy, x0, t0=cfg.sampling.t_start), clean, derivs, system)


# Gram cache ==================================================================
class _GramCache:
    """Keeps the most recent Gram matrix and eigendecomposition.

    With uniform sampling the times do not depend on the seed, so every seed
    (and every noise level on the same grid) reuses one decomposition.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._key = None
        self._value = None

    def get(self, kernel, tau):
        key = (kernel, tau.tobytes())
        with self._lock:
            if key == self._key:
                return self._value
            # drop the old matrices before building new ones
            self._key = self._value = None
            g1 = gram_g1(kernel, tau)
            value = (g1, sym_eig(g1))
            self._key, self._value = key, value
            return value

    def clear(self):
        with self._lock:
            self._key = self._value = None


_CACHE = _GramCache()


# Methods =====================================================================
def _with_anchor(ts: TimeSeries):
    """Times and values with the exact initial value prepended."""
    return np.concatenate([[ts.t0], ts.times]), np.vstack([ts.x0, ts.values])


def _tv_sweep(cfg: ExperimentConfig, data: Dataset):
    """Oracle alpha per component; returns the estimate and chosen alphas."""
    t, y = _with_anchor(data.series)
    alphas = np.geomspace(cfg.tv.alpha_min, cfg.tv.alpha_max, cfg.tv.n_alpha)
    est = np.empty_like(data.derivs)
    chosen = []
    unconverged = 0
    for c in range(est.shape[1]):
        g = y[:, c] - y[0, c]
        truth = data.derivs[:, c]
        best = None
        for a in alphas:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                u, info = tv_derivative(t, g, a, max_iters=cfg.tv.max_iters, eps=cfg.tv.eps, return_info=True)
            unconverged += not info.converged
            # u[j] is the slope on [t_j, t_{j+1}]; average the two slopes
            # around each observation time
            at_obs = 0.5 * (u[:-1] + u[1:])
            err = float(np.sum((at_obs - truth) ** 2))
            if best is None or err < best[0]:
                best = (err, a, at_obs)
        est[:, c] = best[2]
        chosen.append(best[1])
    return est, chosen, unconverged


def sindy_parameters(source: str, W, indices):
    """Read the model parameters off a degree >= 2 SINDy coefficient matrix.

    Returns ``(estimate, names)`` or ``None`` for systems whose right-hand
    side is not polynomial.
    """
    pos = {alpha: i for i, alpha in enumerate(indices)}

    def w(alpha, c):
        return W[pos[tuple(alpha)], c]

    if source == "lotka_volterra":
        return np.array([w((1, 0), 0), -w((1, 1), 0), -w((0, 1), 1), w((1, 1), 1)]), ["alpha", "beta", "gamma", "delta"]
    if source == "lorenz63":
        sigma = 0.5 * (w((0, 1, 0), 0) - w((1, 0, 0), 0))
        return np.array([sigma, w((1, 0, 0), 1), -w((0, 0, 1), 2)]), ["sigma", "rho", "beta"]
    if source == "lorenz96":
        d = W.shape[1]
        return np.array([np.mean([w((0,) * d, c) for c in range(d)])]), ["F"]
    return None


def _consistency(cfg, f: TrajectoryFit, seed) -> float:
    k = min(cfg.checks.consistency_indices, f.times.size)
    if k == 0:
        return 0.0
    rng = systems.generator(seed, _CONSISTENCY_STREAM)
    idx = np.sort(rng.choice(f.times.size, size=k, replace=False))
    worst = 0.0
    for i in idx:
        quad = trajectory_from_quadrature(f, int(i), cfg.checks.quadrature_tol)
        worst = max(worst, float(np.max(np.abs(quad - f.fitted_trajectory[i]))))
    return worst


@dataclass
class _SeedResult:
    seed: int
    rows: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    lcurve: object = None
    models: dict = field(default_factory=dict)

    def add(self, method, metric, value):
        self.rows.append((self.seed, method, metric, float(value)))


def _run_seed(cfg: ExperimentConfig, seed: int) -> _SeedResult:
    out = _SeedResult(seed)
    stage = "data generation"
    try:
        data = generate_data(cfg, seed)
        ts = data.series
        t_obs = ts.times
        f = None
        if "vrkhs" in cfg.methods:
            stage = "vrkhs fit"
            kernel = cfg.vrkhs.kernel.spec()
            g1, eig = _CACHE.get(kernel, ts.times - ts.t0)
            f = fit(ts, kernel, cfg.vrkhs.grid_size, g1=g1, eig=eig)
            out.add("vrkhs", "deriv_error", relative_l2_error(f.fitted_derivatives, data.derivs))
            out.add("vrkhs", "traj_error", relative_l2_error(f.fitted_trajectory, data.clean))
            out.add("vrkhs", "lambda_star", f.lambda_star)
            lam = f.lcurve.lambdas
            out.add("vrkhs", "lambda_in_range", float(lam[-1] <= f.lambda_star <= lam[0]
                                                      and eig.smallest <= f.lambda_star <= eig.largest))
            out.add("vrkhs", "lcurve_monotone", float(f.lcurve.is_monotone()))
            stage = "trajectory consistency check"
            out.add("vrkhs", "consistency_max_abs", _consistency(cfg, f, seed))
            out.curves["vrkhs"] = (f.fitted_derivatives, f.fitted_trajectory)
            out.lcurve = f.lcurve
        if "fd" in cfg.methods:
            stage = "finite differences"
            t, y = _with_anchor(ts)
            est = finite_difference(t, y)[1:]
            out.add("fd", "deriv_error", relative_l2_error(est, data.derivs))
            out.curves["fd"] = (est, None)
        if "tv" in cfg.methods:
            stage = "tv sweep"
            est, alphas, unconverged = _tv_sweep(cfg, data)
            out.add("tv", "deriv_error", relative_l2_error(est, data.derivs))
            for c, a in enumerate(alphas):
                out.add("tv", f"alpha_{c + 1}", a)
            out.add("tv", "unconverged_runs", unconverged)
            out.curves["tv"] = (est, None)
        if "sindy" in cfg.methods:
            stage = "sindy"
            theta, indices = poly_library(f.fitted_trajectory, cfg.sindy.degree)
            res = stls(theta, f.fitted_derivatives, cfg.sindy.threshold, cfg.sindy.max_iters, names=indices)
            out.add("sindy", "support_size", np.count_nonzero(res.coefficients))
            params = sindy_parameters(cfg.source, res.coefficients, indices) if cfg.sindy.degree >= 2 else None
            if params is not None:
                truth = np.array([data.system.parameters[name] for name in params[1]])
                out.add("sindy", "param_error", np.linalg.norm(params[0] - truth) / np.linalg.norm(truth))
            if cfg.region is not None:
                def sindy_field(x, W=res.coefficients):
                    return poly_library(x, cfg.sindy.degree)[0] @ W

                out.add("sindy", "field_error",
                        field_relative_l2(sindy_field, data.system, cfg.region, cfg.field_n_grid, seed))
            est = theta @ res.coefficients
            out.curves["sindy"] = (est, None)
        if "dynlearn" in cfg.methods:
            stage = "dynamics learning"
            model = learn(f.fitted_trajectory, f.fitted_derivatives, cfg.dynlearn.kernel.spec(), cfg.dynlearn.grid_size)
            out.add("dynlearn", "lambda_star", model.lambda_star)
            grid = model.lcurve.lambdas
            out.add("dynlearn", "lambda_in_range", float(grid[-1] <= model.lambda_star <= grid[0]))
            out.add("dynlearn", "lcurve_monotone", float(model.lcurve.is_monotone()))
            out.add("dynlearn", "field_error", field_relative_l2(model, data.system, cfg.region, cfg.field_n_grid, seed))
            out.curves["dynlearn"] = (model(data.clean), None)
            dl = cfg.dynlearn
            if dl.predict_t_end is not None:
                stage = "prediction"
                pred = predict(model, ts.x0, (ts.t0, dl.predict_t_end), dl.predict_n_out, tol=cfg.integrator_tol)
                ref = systems.integrate(data.system, ts.x0, pred.times, tol=cfg.integrator_tol, t0=ts.t0)
                if dl.predict_check_t is not None:
                    keep = pred.times <= dl.predict_check_t
                    out.add("dynlearn", "predict_error", relative_l2_error(pred.values[keep], ref[keep]))
                out.models["prediction"] = (pred, ref)
        out.models["data"] = data
    except IntegrationError as exc:
        raise IntegrationError(f"seed {seed}, stage '{stage}': {exc}", exc.last_time, exc.partial) from exc
    except OdefitError as exc:
        raise type(exc)(f"seed {seed}, stage '{stage}': {exc}") from exc
    except np.linalg.LinAlgError as exc:
        raise DegenerateDataError(f"seed {seed}, stage '{stage}': {exc}") from exc
    return out


# Reports and CSV output ======================================================
@dataclass
class ExperimentReport:
    """Per-seed metric rows plus their means."""

    config: ExperimentConfig
    rows: list
    out_dir: Path | None = None

    def values(self, method: str, metric: str) -> np.ndarray:
        return np.array([r[3] for r in self.rows if r[1] == method and r[2] == metric])

    def mean(self, method: str, metric: str) -> float:
        v = self.values(method, metric)
        if v.size == 0:
            raise KeyError(f"no values for {method}/{metric}")
        return float(np.mean(v))

    def summary(self):
        keys = []
        for _, method, metric, _ in self.rows:
            if (method, metric) not in keys:
                keys.append((method, metric))
        out = []
        for method, metric in keys:
            v = self.values(method, metric)
            std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
            out.append((method, metric, float(np.mean(v)), std, v.size))
        return out


def _fmt(x) -> str:
    return FLOAT_FMT % x


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_seed_files(out_dir: Path, cfg: ExperimentConfig, res: _SeedResult):
    data = res.models["data"]
    d = data.series.d
    t = data.series.times
    if res.lcurve is not None:
        tr = res.lcurve
        curv = np.concatenate([[np.nan], tr.curvatures, [np.nan]])
        rows = [
            (float(tr.lambdas[i]), float(tr.residual_norms[i]), float(tr.seminorms[i]), float(curv[i]),
             int(i == tr.selected_index))
            for i in range(tr.lambdas.size)
        ]
        _write_csv(out_dir / f"lcurve_seed{res.seed}.csv",
                   ["lambda", "residual_norm", "seminorm", "curvature", "selected"], rows)
    if not cfg.write_fits:
        return
    for method, (deriv, traj) in res.curves.items():
        header = ["t"] + [f"y{c + 1}" for c in range(d)] + [f"x{c + 1}" for c in range(d)]
        header += [f"dx{c + 1}" for c in range(d)] + [f"dx{c + 1}_est" for c in range(d)]
        cols = [t[:, None], data.series.values, data.clean, data.derivs, deriv]
        if traj is not None:
            header += [f"x{c + 1}_est" for c in range(d)]
            cols.append(traj)
        table = np.hstack(cols)
        _write_csv(out_dir / "fits" / f"{method}_seed{res.seed}.csv", header,
                   [tuple(float(v) for v in row) for row in table])
    if "prediction" in res.models:
        pred, ref = res.models["prediction"]
        header = ["t"] + [f"x{c + 1}_true" for c in range(d)] + [f"x{c + 1}_pred" for c in range(d)]
        table = np.hstack([pred.times[:, None], ref, pred.values])
        _write_csv(out_dir / "fits" / f"prediction_seed{res.seed}.csv", header,
                   [tuple(float(v) for v in row) for row in table])


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int | None = None) -> ExperimentReport:
    """Run every seed of ``cfg`` and write the CSV outputs to ``out_dir``.

    Seeds run concurrently on up to ``threads`` worker threads; output is
    identical for any thread count.
    """
    threads = resolve_threads(threads)
    t_start = time.perf_counter()
    if threads == 1 or len(cfg.seeds) == 1:
        results = [_run_seed(cfg, s) for s in cfg.seeds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda s: _run_seed(cfg, s), cfg.seeds))
    rows = [r for res in results for r in res.rows]
    report = ExperimentReport(cfg, rows)
    log.info("%s: %d seeds in %.1f s", cfg.name, len(cfg.seeds), time.perf_counter() - t_start)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "effective_config.json").write_text(dumps(cfg))
        _write_csv(out / "errors.csv", ["seed", "method", "metric", "value"], rows)
        _write_csv(out / "summary.csv", ["method", "metric", "mean", "std", "count"], report.summary())
        for res in results:
            _write_seed_files(out, cfg, res)
        report.out_dir = out
    return report


# Bundled suites ==============================================================
@dataclass(frozen=True)
class SuiteEntry:
    config: ExperimentConfig
    reference: dict
    limits: dict
    less_than: list


@dataclass(frozen=True)
class Suite:
    name: str
    description: str
    entries: list


def load_suite(source) -> Suite:
    """Parse a suite file: experiments plus reference values and limits.

    ``reference`` and ``limits`` map ``"method/metric"`` keys to numbers;
    ``less_than`` lists ``[a, b]`` key pairs whose means must satisfy
    ``mean(a) < mean(b)``.
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
        label = str(source)
    else:
        text = source.read_text()
        label = source.name
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{label}: invalid JSON ({exc})") from exc
    extra = set(raw) - {"name", "description", "experiments"}
    if extra:
        raise ConfigError(f"{label}: unknown keys {sorted(extra)}")
    entries = []
    for i, item in enumerate(raw.get("experiments", [])):
        extra = set(item) - {"config", "reference", "limits", "less_than"}
        if extra:
            raise ConfigError(f"{label} experiment {i}: unknown keys {sorted(extra)}")
        cfg = parse_config(item["config"])
        keys = [*item.get("reference", {}), *item.get("limits", {}),
                *(k for pair in item.get("less_than", []) for k in pair)]
        for key in keys:
            if key.count("/") != 1:
                raise ConfigError(f"{label}: metric key {key!r} must look like 'method/metric'")
        entries.append(SuiteEntry(cfg, dict(item.get("reference", {})), dict(item.get("limits", {})),
                                  [list(p) for p in item.get("less_than", [])]))
    if not entries:
        raise ConfigError(f"{label}: no experiments")
    return Suite(raw.get("name", label), raw.get("description", ""), entries)


def bundled_suites() -> list[Suite]:
    """All suites shipped in ``odefit/configs``, sorted by file name."""
    root = resources.files("odefit") / "configs"
    files = sorted((p for p in root.iterdir() if p.name.endswith(".json")), key=lambda p: p.name)
    return [load_suite(p) for p in files]


def _check_rows(suite: Suite, entry: SuiteEntry, report: ExperimentReport | None, error: str | None):
    rows = []
    cfg = entry.config
    keys = list(dict.fromkeys([*entry.reference, *entry.limits]))
    for key in keys:
        method, metric = key.split("/")
        ref = entry.reference.get(key, "")
        lim = entry.limits.get(key, "")
        if report is None:
            rows.append((suite.name, cfg.name, method, metric, "", ref, lim, "failed"))
            continue
        try:
            mean = report.mean(method, metric)
        except KeyError:
            rows.append((suite.name, cfg.name, method, metric, "", ref, lim, "missing"))
            continue
        check = "-" if lim == "" else ("pass" if mean <= lim else "fail")
        rows.append((suite.name, cfg.name, method, metric, mean, ref, lim, check))
    for a, b in entry.less_than:
        label = f"{a} < {b}"
        if report is None:
            rows.append((suite.name, cfg.name, "ordering", label, "", "", "", "failed"))
            continue
        try:
            ok = report.mean(*a.split("/")) < report.mean(*b.split("/"))
        except KeyError:
            rows.append((suite.name, cfg.name, "ordering", label, "", "", "", "missing"))
            continue
        rows.append((suite.name, cfg.name, "ordering", label, "", "", "", "pass" if ok else "fail"))
    if error is not None:
        log.error("%s/%s failed: %s", suite.name, cfg.name, error)
    return rows


def reproduce_all(out_dir, suites=None, threads: int | None = None):
    """Run the bundled suites one after another and write ``summary.csv``.

    A failing experiment is recorded in the summary and does not stop the
    others. Returns ``(reports, summary_rows, all_passed)``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suites = bundled_suites() if suites is None else suites
    reports = {}
    summary = []
    for suite in suites:
        for entry in suite.entries:
            cfg = entry.config
            report, error = None, None
            try:
                report = run_experiment(cfg, out / suite.name / cfg.name, threads)
                reports[(suite.name, cfg.name)] = report
            except (OdefitError, np.linalg.LinAlgError, ValueError) as exc:
                error = str(exc)
            summary.extend(_check_rows(suite, entry, report, error))
        _CACHE.clear()
    _write_csv(out / "summary.csv",
               ["suite", "experiment", "method", "metric", "mean", "reference", "limit", "check"],
               [tuple(float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v for v in r)
                for r in summary])
    passed = all(r[7] in ("pass", "-") for r in summary)
    return reports, summary, passed
