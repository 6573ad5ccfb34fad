"""Nonparametric vector-field recovery from fitted states and derivatives.

The field is modelled as ``f(x) = sum_i k(|x - c_i|) v_i`` with centers
``c_i`` at the fitted states. The coefficients solve the kernel ridge system
``V = B (G + lam I)^{-1}`` with ``B`` the fitted derivatives, and ``lam`` is
picked on the L-curve of the state Gram matrix exactly as for the
time-domain fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .derivfit import DEFAULT_GRID_SIZE, LCurveTrace, TimeSeries, coefficients, lambda_grid, lcurve_select
from .errors import DegenerateDataError, IntegrationError
from .kernels import KernelSpec, gram_state
from .numerics import sym_eig
from .systems import integrate

__all__ = ["DynamicsModel", "learn", "eval_field", "predict", "field_relative_l2"]

# rows of the cross kernel matrix built at once in eval_field
_CHUNK = 4096


@dataclass(frozen=True)
class DynamicsModel:
    """Kernel expansion of a recovered vector field.

    ``centers`` is ``n x d`` and ``coefficients`` is ``d x n``.
    """

    kernel: KernelSpec
    centers: np.ndarray
    coefficients: np.ndarray
    lambda_star: float
    lcurve: LCurveTrace | None = field(default=None, repr=False)

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        v = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        if v.shape != (c.shape[1], c.shape[0]):
            raise ValueError(f"coefficients shape {v.shape} does not match centers {c.shape}")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "coefficients", v)

    @property
    def dimension(self) -> int:
        return self.centers.shape[1]

    def __call__(self, x):
        return eval_field(self, x)


def learn(states, derivs, kernel: KernelSpec, grid_size: int = DEFAULT_GRID_SIZE) -> DynamicsModel:
    """Fit a vector field to state/derivative pairs.

    Parameters
    ----------
    states, derivs : (n, d) array
        Fitted trajectory and derivative at the sample times. Duplicate
        states are kept; ``lam > 0`` absorbs the rank deficiency.
    kernel : KernelSpec
        Kernel on Euclidean state distance.
    grid_size : int
        Number of lambda candidates for the L-curve.
    """
    X = np.asarray(states, dtype=float)
    Y = np.asarray(derivs, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape != Y.shape or X.shape[0] == 0:
        raise ValueError(f"states {X.shape} and derivs {Y.shape} must be matching nonempty n x d arrays")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("states and derivs must be finite (no NaN or inf)")

    g = gram_state(kernel, X)
    eig = sym_eig(g)
    b = Y.T
    if not np.any(b):
        # zero targets: the fit is the zero field for every lambda
        lambdas = lambda_grid(eig, grid_size)
        zeros = np.zeros_like(lambdas)
        trace = LCurveTrace(lambdas, zeros, zeros.copy(), np.zeros(lambdas.size - 2), 0)
        return DynamicsModel(kernel, X.copy(), np.zeros_like(b), trace.lambda_star, trace)
    trace = lcurve_select(g, eig, b, grid_size)
    V = coefficients(g, b, trace.lambda_star, eig)
    return DynamicsModel(kernel, X.copy(), V, trace.lambda_star, trace)


def eval_field(model: DynamicsModel, x) -> np.ndarray:
    """Evaluate the recovered field at one state ``(d,)`` or a batch ``(m, d)``."""
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim == 1
    pts = x_arr[None, :] if single else x_arr
    if pts.ndim != 2 or pts.shape[1] != model.dimension:
        raise ValueError(f"expected states of dimension {model.dimension}, got shape {x_arr.shape}")
    out = np.empty((pts.shape[0], model.dimension))
    for start in range(0, pts.shape[0], _CHUNK):
        block = pts[start:start + _CHUNK]
        K = gram_state(model.kernel, block, model.centers)
        out[start:start + _CHUNK] = K @ model.coefficients.T
    return out[0] if single else out


def predict(model: DynamicsModel, x0, t_span, n_out: int, tol: float = 1e-10) -> TimeSeries:
    """Integrate the recovered field from ``x0``.

    The result is sampled at ``t_span[0] + i (t_span[1] - t_span[0]) / n_out``
    for ``i = 1..n_out``; ``x0`` is carried as the initial value.

    Raises
    ------
    IntegrationError
        If the integrator fails, e.g. when the learned field blows up.
    """
    t_start, t_end = (float(v) for v in t_span)
    if not t_end > t_start:
        raise ValueError("t_span must be increasing")
    if n_out < 2:
        raise ValueError("n_out must be at least 2")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (model.dimension,):
        raise ValueError(f"x0 must have shape ({model.dimension},)")
    times = t_start + np.arange(1, n_out + 1) * ((t_end - t_start) / n_out)
    try:
        values = integrate(model, x0, times, tol=tol, t0=t_start)
    except IntegrationError as exc:
        raise IntegrationError(
            f"prediction failed; last valid time {exc.last_time:.6g}", exc.last_time, exc.partial
        ) from exc
    return TimeSeries(times=times, values=values, x0=x0, t0=t_start)


def field_relative_l2(model, truth, region, n_grid: int = 100_000, seed: int = 0) -> float:
    """Relative L2 distance between a recovered field and ``truth`` over a box.

    The integrals are approximated on ``n_grid`` points of a scrambled
    Halton sequence, so the estimate is deterministic given ``seed``.

    Parameters
    ----------
    model : DynamicsModel or callable
        Recovered field; any callable mapping an ``(m, d)`` batch of states
        to ``(m, d)`` derivatives works.
    truth : callable
        Reference field with the same calling convention.
    region : sequence of (low, high)
        One interval per state dimension.
    """
    box = np.asarray(region, dtype=float)
    d = model.dimension if isinstance(model, DynamicsModel) else box.shape[0]
    if box.ndim != 2 or box.shape != (d, 2):
        raise ValueError(f"region must list {d} (low, high) pairs, got shape {box.shape}")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("region intervals must have low < high")
    if n_grid < 1:
        raise ValueError("n_grid must be positive")
    sampler = qmc.Halton(d, scramble=True, seed=np.random.default_rng(seed))
    pts = qmc.scale(sampler.random(n_grid), box[:, 0], box[:, 1])
    err2 = 0.0
    ref2 = 0.0
    for start in range(0, n_grid, _CHUNK):
        block = pts[start:start + _CHUNK]
        f_true = np.asarray(truth(block), dtype=float)
        err2 += float(np.sum((np.asarray(model(block), dtype=float) - f_true) ** 2))
        ref2 += float(np.sum(f_true**2))
    if ref2 == 0:
        raise DegenerateDataError("true field vanishes on the region; relative error undefined")
    return float(np.sqrt(err2 / ref2))
