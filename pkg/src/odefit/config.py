"""Strict JSON experiment configuration.

Every section is a frozen dataclass. Parsing rejects unknown keys and
wrongly typed values before anything runs, and :func:`to_dict` writes every
field (defaults included), so the echoed file fully describes a run.
"""

from __future__ import annotations

import dataclasses
import json
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .systems import DEFAULT_PARAMETERS, DEFAULT_X0, SYSTEM_NAMES

__all__ = [
    "KernelConfig",
    "SamplingConfig",
    "VrkhsConfig",
    "TVConfig",
    "SindyConfig",
    "DynlearnConfig",
    "ChecksConfig",
    "ExperimentConfig",
    "METHODS",
    "SOURCES",
    "LARGE_N",
    "parse_config",
    "load_config",
    "to_dict",
    "dumps",
]

METHODS = ("vrkhs", "fd", "tv", "sindy", "dynlearn")
# "cos" is the analytic test signal g(t) = cos t; the rest are ODE systems
SOURCES = ("cos", *SYSTEM_NAMES)
# sample counts above this need an explicit opt-in (dense O(n^3) eigensolves)
LARGE_N = 8000


@dataclass(frozen=True)
class KernelConfig:
    family: str = "gaussian"
    length_scale: float = 1.0
    nu: float | None = None

    def validate(self, where):
        if self.family not in ("gaussian", "matern"):
            raise ConfigError(f"{where}.family: unknown kernel family {self.family!r}")
        if not self.length_scale > 0:
            raise ConfigError(f"{where}.length_scale must be positive")
        if self.family == "matern" and self.nu not in (0.5, 1.5, 2.5):
            raise ConfigError(f"{where}.nu must be 0.5, 1.5 or 2.5 for the Matérn family")
        if self.family == "gaussian" and self.nu is not None:
            raise ConfigError(f"{where}.nu only applies to the Matérn family")

    def spec(self):
        from .kernels import KernelSpec

        return KernelSpec(self.family, self.length_scale, self.nu)


@dataclass(frozen=True)
class SamplingConfig:
    """Observation times ``t_start + s`` with ``s`` from :func:`odefit.systems.sample_times`."""

    t_end: float
    n: int
    mode: str = "uniform"
    t_start: float = 0.0

    def validate(self, where):
        if self.mode not in ("uniform", "random"):
            raise ConfigError(f"{where}.mode must be 'uniform' or 'random'")
        if not self.t_end > self.t_start:
            raise ConfigError(f"{where}: t_end must exceed t_start")
        if self.n < 1:
            raise ConfigError(f"{where}.n must be positive")


@dataclass(frozen=True)
class VrkhsConfig:
    kernel: KernelConfig = field(default_factory=KernelConfig)
    grid_size: int = 200

    def validate(self, where):
        self.kernel.validate(f"{where}.kernel")
        if self.grid_size < 10:
            raise ConfigError(f"{where}.grid_size must be at least 10")


@dataclass(frozen=True)
class TVConfig:
    """Log-spaced alpha sweep; the best alpha per component is reported."""

    alpha_min: float = 1e-8
    alpha_max: float = 1.0
    n_alpha: int = 20
    max_iters: int = 100
    eps: float = 1e-8

    def validate(self, where):
        if not 0 < self.alpha_min <= self.alpha_max:
            raise ConfigError(f"{where}: need 0 < alpha_min <= alpha_max")
        if self.n_alpha < 1 or self.max_iters < 1:
            raise ConfigError(f"{where}: n_alpha and max_iters must be positive")
        if not self.eps > 0:
            raise ConfigError(f"{where}.eps must be positive")


@dataclass(frozen=True)
class SindyConfig:
    degree: int = 2
    threshold: float = 0.1
    max_iters: int = 10

    def validate(self, where):
        if self.degree < 0:
            raise ConfigError(f"{where}.degree must be nonnegative")
        if not self.threshold > 0:
            raise ConfigError(f"{where}.threshold must be positive")
        if self.max_iters < 1:
            raise ConfigError(f"{where}.max_iters must be positive")


@dataclass(frozen=True)
class DynlearnConfig:
    """Field recovery; ``predict_t_end`` switches on a forecast from ``x0``."""

    kernel: KernelConfig = field(default_factory=lambda: KernelConfig(length_scale=1000.0))
    grid_size: int = 200
    predict_t_end: float | None = None
    predict_n_out: int = 2000
    predict_check_t: float | None = None

    def validate(self, where):
        self.kernel.validate(f"{where}.kernel")
        if self.grid_size < 10:
            raise ConfigError(f"{where}.grid_size must be at least 10")
        if self.predict_n_out < 2:
            raise ConfigError(f"{where}.predict_n_out must be at least 2")
        if self.predict_check_t is not None and self.predict_t_end is None:
            raise ConfigError(f"{where}.predict_check_t needs predict_t_end")


@dataclass(frozen=True)
class ChecksConfig:
    """Per-fit self checks: quadrature of the derivative against the trajectory."""

    consistency_indices: int = 5
    quadrature_tol: float = 1e-10

    def validate(self, where):
        if self.consistency_indices < 0:
            raise ConfigError(f"{where}.consistency_indices must be nonnegative")
        if not self.quadrature_tol > 0:
            raise ConfigError(f"{where}.quadrature_tol must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    source: str
    sampling: SamplingConfig
    delta: float
    seeds: list = field(default_factory=lambda: [0])
    methods: list = field(default_factory=lambda: ["vrkhs"])
    parameters: dict = field(default_factory=dict)
    x0: list | None = None
    integrator_tol: float = 1e-10
    region: list | None = None
    field_n_grid: int = 100_000
    vrkhs: VrkhsConfig = field(default_factory=VrkhsConfig)
    tv: TVConfig = field(default_factory=TVConfig)
    sindy: SindyConfig = field(default_factory=SindyConfig)
    dynlearn: DynlearnConfig = field(default_factory=DynlearnConfig)
    checks: ChecksConfig = field(default_factory=ChecksConfig)
    write_fits: bool = True

    def validate(self, allow_large: bool = False):
        if not self.name or "/" in self.name:
            raise ConfigError("name must be a nonempty string without '/'")
        if self.source not in SOURCES:
            raise ConfigError(f"source must be one of {SOURCES}, got {self.source!r}")
        self.sampling.validate("sampling")
        if self.sampling.n > LARGE_N and not allow_large:
            raise ConfigError(
                f"n = {self.sampling.n} > {LARGE_N}: the dense eigendecomposition costs O(n^3) time "
                f"and O(n^2) memory; pass --allow-large to run it anyway"
            )
        if self.delta < 0:
            raise ConfigError("delta must be nonnegative")
        if not self.seeds or any(not isinstance(s, int) or isinstance(s, bool) or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be a nonempty list of nonnegative integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ConfigError(f"methods must be a nonempty subset of {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must be distinct")
        if {"sindy", "dynlearn"} & set(self.methods):
            if "vrkhs" not in self.methods:
                raise ConfigError("sindy and dynlearn work on the vrkhs fit; add 'vrkhs' to methods")
            if self.source == "cos":
                raise ConfigError("the cos source has no vector field to recover")
        if "tv" in self.methods and self.sampling.mode != "uniform":
            raise ConfigError("tv needs uniform sampling")
        if self.source == "cos":
            if self.parameters:
                raise ConfigError("the cos source takes no parameters")
            if self.x0 is not None:
                raise ConfigError("the cos source fixes x0 = cos(t_start)")
        else:
            unknown = set(self.parameters) - set(DEFAULT_PARAMETERS[self.source])
            if unknown:
                raise ConfigError(f"unknown parameters for {self.source}: {sorted(unknown)}")
            if self.x0 is not None and len(self.x0) != self.dimension:
                raise ConfigError(f"x0 must have {self.dimension} entries")
        if self.region is not None:
            if len(self.region) != self.dimension or any(
                len(iv) != 2 or not iv[0] < iv[1] for iv in self.region
            ):
                raise ConfigError(f"region must list {self.dimension} (low, high) pairs with low < high")
        if "dynlearn" in self.methods and self.region is None:
            raise ConfigError("dynlearn needs a region for the field error")
        if not self.integrator_tol > 0:
            raise ConfigError("integrator_tol must be positive")
        if self.field_n_grid < 1:
            raise ConfigError("field_n_grid must be positive")
        self.vrkhs.validate("vrkhs")
        self.tv.validate("tv")
        self.sindy.validate("sindy")
        self.dynlearn.validate("dynlearn")
        self.checks.validate("checks")
        return self

    @property
    def dimension(self) -> int:
        if self.source == "cos":
            return 1
        if self.source == "lorenz96":
            return int(self.parameters.get("N", DEFAULT_PARAMETERS["lorenz96"]["N"]))
        return len(DEFAULT_X0[self.source])

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


# Strict parsing ==============================================================
def _type_ok(value, hint) -> bool:
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType):
        return any(_type_ok(value, h) for h in typing.get_args(hint))
    if hint is type(None):
        return value is None
    if hint is bool:
        return isinstance(value, bool)
    if hint is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if hint is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        return ok and math.isfinite(value)
    if hint is str:
        return isinstance(value, str)
    if hint in (list, dict):
        return isinstance(value, hint)
    return False


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown keys {unknown}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        path = f"{where}.{f.name}" if where else f.name
        if f.name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"missing required key {path!r}")
            continue
        value = data[f.name]
        hint = hints[f.name]
        if dataclasses.is_dataclass(hint):
            kwargs[f.name] = _build(hint, value, path)
            continue
        if not _type_ok(value, hint):
            raise ConfigError(f"{path}: value {value!r} does not match type {hint}")
        if value is not None and float in (hint, *typing.get_args(hint)):
            value = float(value)
        kwargs[f.name] = value
    return cls(**kwargs)


def parse_config(data, allow_large: bool = False) -> ExperimentConfig:
    """Build and validate an :class:`ExperimentConfig` from a JSON-like dict."""
    cfg = _build(ExperimentConfig, data, "")
    params = cfg.parameters
    if any(not _type_ok(v, float) for v in params.values()):
        raise ConfigError("parameters must map names to finite numbers")
    return cfg.validate(allow_large)


def load_config(path, allow_large: bool = False) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(data, allow_large)


def to_dict(cfg) -> dict:
    """Plain dict with every field, defaults included."""
    return dataclasses.asdict(cfg)


def dumps(cfg) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n"
