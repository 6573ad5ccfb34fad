"""Command-line entry point ``odefit``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 a reproduced benchmark missed its tolerance.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .config import LARGE_N, load_config
from .derivfit import TimeSeries, fit
from .dynlearn import learn
from .errors import ConfigError, OdefitError
from .kernels import KernelSpec

log = logging.getLogger("odefit")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_TOLERANCE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not numerical ones
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p, config_required=True):
    p.add_argument("--config", type=Path, required=config_required, help="experiment config (JSON)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, help="run this single seed instead of the config's list")
    p.add_argument("--threads", type=int, help="parallel seeds (default: $ODEFIT_THREADS or 1)")
    p.add_argument("--allow-large", action="store_true", help=f"permit n > {LARGE_N}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="odefit", description="Derivative, trajectory and dynamics estimation from noisy time series.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate noisy data only")
    _common(p)

    p = sub.add_parser("fit", help="fit derivative and trajectory (vRKHS)")
    _common(p, config_required=False)
    p.add_argument("--data", type=Path, help="CSV with header t,y1..yd; the first row is the exact initial value")
    p.add_argument("--kernel", choices=("gaussian", "matern"), default="gaussian")
    p.add_argument("--length-scale", type=float, default=1.0)
    p.add_argument("--nu", type=float)
    p.add_argument("--grid-size", type=int, default=200)

    p = sub.add_parser("learn", help="fit, then recover the vector field")
    _common(p, config_required=False)
    p.add_argument("--data", type=Path, help="CSV as for 'fit'")
    p.add_argument("--length-scale", type=float, default=1.0, help="time kernel length scale (with --data)")
    p.add_argument("--state-length-scale", type=float, default=1000.0, help="state kernel length scale (with --data)")
    p.add_argument("--grid-size", type=int, default=200)

    p = sub.add_parser("baseline", help="run a comparator method")
    _common(p)
    p.add_argument("--method", choices=("fd", "tv", "sindy"), required=True)

    p = sub.add_parser("bench", help="run a full experiment config")
    _common(p)

    p = sub.add_parser("reproduce", help="run the bundled benchmark suites")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--suite", action="append", help="restrict to these suite names (repeatable)")
    p.add_argument("--threads", type=int)
    return parser


# helpers =====================================================================
def _load(args, methods=None):
    cfg = load_config(args.config, allow_large=args.allow_large)
    if cfg.sampling.n > LARGE_N:
        log.warning("n = %d: dense O(n^3) eigendecomposition, expect long runtimes and O(n^2) memory",
                    cfg.sampling.n)
    changes = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        changes["seeds"] = [args.seed]
    if methods is not None:
        changes["methods"] = methods
    return cfg.replace(**changes).validate(allow_large=args.allow_large) if changes else cfg


def _read_series(path: Path) -> TimeSeries:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path}: {exc}") from exc
    if len(rows) < 3 or not rows[0] or rows[0][0].strip() != "t":
        raise ConfigError(f"{path}: expected a header 't,y1,...' and at least two data rows")
    try:
        table = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric entry ({exc})") from exc
    if table.ndim != 2 or table.shape[1] != len(rows[0]):
        raise ConfigError(f"{path}: ragged rows")
    try:
        return TimeSeries(times=table[1:, 0], values=table[1:, 1:], x0=table[0, 1:], t0=table[0, 0])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _write(path: Path, header, table):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.atleast_2d(table):
            w.writerow([bench.FLOAT_FMT % v for v in row])


def _fit_data(args):
    ts = _read_series(args.data)
    if ts.n > LARGE_N and not args.allow_large:
        raise ConfigError(f"n = {ts.n} > {LARGE_N}; pass --allow-large")
    kernel = KernelSpec(getattr(args, "kernel", "gaussian"), args.length_scale, getattr(args, "nu", None))
    f = fit(ts, kernel, args.grid_size)
    d = ts.d
    header = ["t"] + [f"dx{c + 1}" for c in range(d)] + [f"x{c + 1}" for c in range(d)]
    _write(args.out / "fit.csv", header, np.hstack([ts.times[:, None], f.fitted_derivatives, f.fitted_trajectory]))
    tr = f.lcurve
    curv = np.concatenate([[np.nan], tr.curvatures, [np.nan]])
    _write(args.out / "lcurve.csv", ["lambda", "residual_norm", "seminorm", "curvature"],
           np.column_stack([tr.lambdas, tr.residual_norms, tr.seminorms, curv]))
    print(f"lambda* = {f.lambda_star:.6e}; wrote {args.out / 'fit.csv'}")
    return f


def _report(report: bench.ExperimentReport):
    for method, metric, mean, std, count in report.summary():
        print(f"{method:9s} {metric:22s} mean {mean:.6e}  std {std:.3e}  (n={count})")


# commands ====================================================================
def cmd_simulate(args):
    cfg = _load(args)
    args.out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        data = bench.generate_data(cfg, seed)
        ts = data.series
        d = ts.d
        # observations in the format 'fit --data' reads: anchor row first
        obs = np.vstack([np.concatenate([[ts.t0], ts.x0]), np.hstack([ts.times[:, None], ts.values])])
        _write(args.out / f"data_seed{seed}.csv", ["t"] + [f"y{c + 1}" for c in range(d)], obs)
        header = ["t"] + [f"x{c + 1}" for c in range(d)] + [f"dx{c + 1}" for c in range(d)]
        _write(args.out / f"truth_seed{seed}.csv", header, np.hstack([ts.times[:, None], data.clean, data.derivs]))
    print(f"wrote {len(cfg.seeds)} data file(s) to {args.out}")


def cmd_fit(args):
    if args.data is not None:
        _fit_data(args)
        return
    if args.config is None:
        raise ConfigError("fit needs --config or --data")
    _report(bench.run_experiment(_load(args, ["vrkhs"]), args.out, args.threads))


def cmd_learn(args):
    if args.data is not None:
        f = _fit_data(args)
        model = learn(f.fitted_trajectory, f.fitted_derivatives, KernelSpec("gaussian", args.state_length_scale),
                      args.grid_size)
        d = model.dimension
        header = [f"c{c + 1}" for c in range(d)] + [f"v{c + 1}" for c in range(d)]
        _write(args.out / "field_model.csv", header, np.hstack([model.centers, model.coefficients.T]))
        print(f"field lambda* = {model.lambda_star:.6e}; wrote {args.out / 'field_model.csv'}")
        return
    if args.config is None:
        raise ConfigError("learn needs --config or --data")
    cfg = load_config(args.config, allow_large=args.allow_large)
    methods = ["vrkhs", "dynlearn"] + (["sindy"] if "sindy" in cfg.methods else [])
    _report(bench.run_experiment(_load(args, methods), args.out, args.threads))


def cmd_baseline(args):
    methods = ["vrkhs", "sindy"] if args.method == "sindy" else [args.method]
    _report(bench.run_experiment(_load(args, methods), args.out, args.threads))


def cmd_bench(args):
    _report(bench.run_experiment(_load(args), args.out, args.threads))


def cmd_reproduce(args):
    suites = bench.bundled_suites()
    if args.suite:
        known = {s.name for s in suites}
        missing = sorted(set(args.suite) - known)
        if missing:
            raise ConfigError(f"unknown suite(s) {missing}; available: {sorted(known)}")
        suites = [s for s in suites if s.name in args.suite]
    _, rows, passed = bench.reproduce_all(args.out, suites, args.threads)
    for r in rows:
        mean = "" if r[4] == "" else f"{r[4]:.3e}"
        print(f"{r[7]:7s} {r[0]}/{r[1]} {r[2]} {r[3]} {mean} (limit {r[6] or '-'})")
    print(f"summary written to {args.out / 'summary.csv'}")
    return EXIT_OK if passed else EXIT_TOLERANCE


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "learn": cmd_learn,
    "baseline": cmd_baseline,
    "bench": cmd_bench,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OdefitError, np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
