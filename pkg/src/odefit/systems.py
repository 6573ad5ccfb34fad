"""Benchmark ODE systems, reference integration, time sampling and noise."""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationError

__all__ = [
    "OdeSystem",
    "SYSTEM_NAMES",
    "DEFAULT_PARAMETERS",
    "DEFAULT_X0",
    "make_system",
    "integrate",
    "sample_times",
    "add_noise",
    "generator",
]

# Parameter names in the order accepted by positional sequences.
DEFAULT_PARAMETERS: dict[str, dict[str, float]] = {
    "pendulum": {"L": 5.0, "g": 9.8},
    "lotka_volterra": {"alpha": 0.7, "beta": 0.007, "gamma": 1.0, "delta": 0.007},
    "sir": {"beta": 0.4, "gamma": 0.04},
    "lorenz63": {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0},
    "lorenz96": {"N": 5, "F": 8.0},
}

DEFAULT_X0: dict[str, tuple[float, ...]] = {
    "pendulum": (0.0, 0.0),
    "lotka_volterra": (70.0, 50.0),
    "sir": (900.0, 10.0, 0.0),
    "lorenz63": (1.0, 1.0, 1.0),
    "lorenz96": (8.01, 8.0, 8.0, 8.0, 8.0),
}

SYSTEM_NAMES = tuple(DEFAULT_PARAMETERS)


@dataclass(frozen=True)
class OdeSystem:
    """Autonomous system ``x' = rhs(x)``.

    ``rhs`` maps a ``(d,)`` state, or a ``(m, d)`` batch of states, to
    derivatives of the same shape.
    """

    name: str
    dimension: int
    parameters: dict[str, float] = field(compare=False)
    rhs: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)

    def __call__(self, x):
        return self.rhs(np.asarray(x, dtype=float))


def _pendulum(p):
    alpha = p["g"] / p["L"]

    def rhs(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([x2, np.cos(np.exp(x1)) - alpha * np.sin(x1)], axis=-1)

    return rhs, 2


def _lotka_volterra(p):
    a, b, c, d = p["alpha"], p["beta"], p["gamma"], p["delta"]

    def rhs(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([a * x1 - b * x1 * x2, d * x1 * x2 - c * x2], axis=-1)

    return rhs, 2


def _sir(p):
    beta, gamma = p["beta"], p["gamma"]

    def rhs(x):
        s, i, r = x[..., 0], x[..., 1], x[..., 2]
        infection = beta * s * i / (s + i + r)
        return np.stack([-infection, infection - gamma * i, gamma * i], axis=-1)

    return rhs, 3


def _lorenz63(p):
    sigma, rho, beta = p["sigma"], p["rho"], p["beta"]

    def rhs(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([sigma * (x2 - x1), x1 * (rho - x3) - x2, x1 * x2 - beta * x3], axis=-1)

    return rhs, 3


def _lorenz96(p):
    n = int(p["N"])
    if n != p["N"] or n < 4:
        raise ValueError(f"Lorenz96 needs an integer N >= 4, got {p['N']!r}")
    forcing = p["F"]

    def rhs(x):
        # (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F with cyclic indices
        return (np.roll(x, -1, axis=-1) - np.roll(x, 2, axis=-1)) * np.roll(x, 1, axis=-1) - x + forcing

    return rhs, n


_BUILDERS = {
    "pendulum": _pendulum,
    "lotka_volterra": _lotka_volterra,
    "sir": _sir,
    "lorenz63": _lorenz63,
    "lorenz96": _lorenz96,
}


def make_system(name: str, parameters: Mapping[str, float] | Sequence[float] | None = None) -> OdeSystem:
    """Build one of the benchmark systems.

    Parameters
    ----------
    name : str
        One of :data:`SYSTEM_NAMES`.
    parameters : mapping or sequence, optional
        A mapping overrides individual defaults by name; a sequence must
        list every parameter in the order of :data:`DEFAULT_PARAMETERS`.
    """
    if name not in _BUILDERS:
        raise ValueError(f"unknown system {name!r}; expected one of {SYSTEM_NAMES}")
    params = dict(DEFAULT_PARAMETERS[name])
    if parameters is None:
        pass
    elif isinstance(parameters, Mapping):
        unknown = set(parameters) - set(params)
        if unknown:
            raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}")
        params.update({k: float(v) for k, v in parameters.items()})
    else:
        values = list(parameters)
        if len(values) != len(params):
            raise ValueError(f"{name} takes {len(params)} parameters {list(params)}, got {len(values)}")
        params = {k: float(v) for k, v in zip(params, values)}
    rhs, dim = _BUILDERS[name](params)
    return OdeSystem(name=name, dimension=dim, parameters=params, rhs=rhs)


def integrate(system, x0, times, tol: float = 1e-10, t0: float = 0.0,
              first_step: float | None = None, max_step: float = np.inf) -> np.ndarray:
    """Solve ``x' = f(x)`` from ``x(t0) = x0`` and sample at ``times``.

    Uses the Dormand-Prince 5(4) embedded pair with dense output, with
    relative and absolute tolerance ``tol``.

    Parameters
    ----------
    system : OdeSystem or callable
        Right-hand side taking a ``(d,)`` state.
    times : (n,) array
        Nondecreasing output times, all ``>= t0``.
    first_step, max_step : float, optional
        Step controls; passing equal values with a loose ``tol`` forces a
        fixed step size.

    Returns
    -------
    (n, d) ndarray

    Raises
    ------
    IntegrationError
        If the step size underflows; carries the partial output.
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if not tol > 0:
        raise ValueError("tol must be positive")
    if times.size and (np.any(np.diff(times) < 0) or times[0] < t0):
        raise ValueError("times must be nondecreasing and not before t0")
    if times.size == 0:
        return np.empty((0, x0.size))
    t_end = float(times[-1])
    if t_end == t0:
        return np.tile(x0, (times.size, 1))
    # solve_ivp wants strictly increasing output times
    grid, where = np.unique(times, return_inverse=True)
    sol = solve_ivp(
        lambda t, x: system(x),
        (t0, t_end),
        x0,
        method="RK45",
        t_eval=grid,
        rtol=tol,
        atol=tol,
        first_step=first_step,
        max_step=max_step,
    )
    if sol.status != 0:
        partial = sol.y.T.copy()
        last = float(sol.t[-1]) if sol.t.size else t0
        raise IntegrationError(f"integration failed at t = {last:.6g}: {sol.message}", last, partial)
    return sol.y.T[where.reshape(-1)]


def generator(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``(seed, stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


_TIMES_STREAM = 1
_NOISE_STREAM = 2


def sample_times(t_end: float, n: int, mode: str = "uniform", seed: int = 0) -> np.ndarray:
    """Sample ``n`` observation times in ``(0, t_end]``.

    ``uniform`` gives ``i * t_end / n`` for ``i = 1..n``. ``random`` draws
    i.i.d. uniform times, sorted; duplicates are redrawn.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if mode == "uniform":
        return np.arange(1, n + 1) * (t_end / n)
    if mode != "random":
        raise ValueError(f"unknown sampling mode {mode!r}")
    rng = generator(seed, _TIMES_STREAM)
    # 1 - U maps [0, 1) onto (0, 1]
    t = np.unique(t_end * (1.0 - rng.random(n)))
    while t.size < n:
        t = np.unique(np.concatenate([t, t_end * (1.0 - rng.random(n - t.size))]))
    return t


def add_noise(values, delta: float, seed: int = 0) -> np.ndarray:
    """Add i.i.d. ``N(0, delta^2)`` noise to every entry."""
    values = np.asarray(values, dtype=float)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0:
        return values.copy()
    rng = generator(seed, _NOISE_STREAM)
    return values + delta * rng.standard_normal(values.shape)
