"""Joint derivative and trajectory fitting by integral-operator Tikhonov
regularization in a vector-valued RKHS.

The unknown derivative ``phi`` is penalized in the RKHS norm while its
running integral from the initial value is fitted to the observations.
With a separable kernel ``k(s, t) I_d`` the minimizer is

    phi(t) = sum_j (int_0^{t_j} k(s, t) ds) v_j,      V = B (G1 + lam I)^{-1},

where ``G1`` holds the double integrals of ``k`` and ``B`` the
observations minus the initial value. ``lam`` is picked at the corner of
the L-curve, computed for every candidate from one eigendecomposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError
from .kernels import KernelSpec, gram_g1, psi_matrix
from .numerics import EigenDecomposition, adaptive_quadrature, max_curvature_point, signed_curvature, sym_eig

__all__ = [
    "TimeSeries",
    "LCurveTrace",
    "TrajectoryFit",
    "assemble_b",
    "coefficients",
    "lambda_grid",
    "lcurve_select",
    "fit",
    "eval_derivative",
    "trajectory_from_quadrature",
    "residual_identity_check",
    "seminorm_identity_check",
    "DEFAULT_GRID_SIZE",
    "SPECTRAL_FLOOR",
]

DEFAULT_GRID_SIZE = 200
# lower end of the lambda grid relative to the largest eigenvalue
SPECTRAL_FLOOR = 1e-14


@dataclass(frozen=True)
class TimeSeries:
    """Sampled trajectory with a known initial value.

    Parameters
    ----------
    times : (n,) array
        Strictly increasing, all greater than ``t0``.
    values : (n, d) array
        Row ``i`` is the state (observed or true) at ``times[i]``.
    x0 : (d,) array
        Exact state at ``t0``.
    t0 : float
        Time of the initial value.
    """

    times: np.ndarray
    values: np.ndarray
    x0: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if times.size == 0:
            raise ValueError("a time series needs at least one sample")
        if values.shape[0] != times.size:
            raise ValueError(f"{values.shape[0]} value rows for {times.size} times")
        if x0.shape != (values.shape[1],):
            raise ValueError(f"x0 has shape {x0.shape}, expected ({values.shape[1]},)")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))
                and np.all(np.isfinite(x0)) and np.isfinite(self.t0)):
            raise ValueError("time series entries must be finite")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if times[0] <= self.t0:
            raise ValueError("all sample times must lie after t0")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "t0", float(self.t0))

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LCurveTrace:
    """L-curve sampled on a log-spaced grid.

    ``lambdas`` is descending. ``curvatures[i]`` belongs to grid point
    ``i + 1`` (endpoints carry no curvature).
    """

    lambdas: np.ndarray
    residual_norms: np.ndarray
    seminorms: np.ndarray
    curvatures: np.ndarray
    selected_index: int

    @property
    def lambda_star(self) -> float:
        return float(self.lambdas[self.selected_index])

    def is_monotone(self) -> bool:
        """Residuals nondecreasing and seminorms nonincreasing in lambda."""
        # lambdas are descending, so walk the arrays backwards
        r = self.residual_norms[::-1]
        s = self.seminorms[::-1]
        rtol = 1e-12
        return bool(np.all(np.diff(r) >= -rtol * r[1:]) and np.all(np.diff(s) <= rtol * s[:-1]))


@dataclass(frozen=True)
class TrajectoryFit:
    """Result of the joint derivative/trajectory fit.

    ``v_lambda`` is ``d x n``; ``fitted_derivatives`` and
    ``fitted_trajectory`` are ``n x d`` and refer to ``times``.
    """

    kernel: KernelSpec
    times: np.ndarray
    t0: float
    x0: np.ndarray
    lambda_star: float
    v_lambda: np.ndarray
    g1: np.ndarray = field(repr=False)
    fitted_derivatives: np.ndarray = field(repr=False)
    fitted_trajectory: np.ndarray = field(repr=False)
    lcurve: LCurveTrace = field(repr=False)

    @property
    def shifted_times(self) -> np.ndarray:
        return self.times - self.t0


def assemble_b(ts: TimeSeries) -> np.ndarray:
    """Right-hand side ``B`` (d x n) with columns ``y_i - x0``."""
    return (ts.values - ts.x0[None, :]).T.copy()


def coefficients(g1, b, lam: float, eig: EigenDecomposition | None = None) -> np.ndarray:
    """Coefficient matrix ``V = B (G1 + lam I)^{-1}`` via the spectral factors."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    if eig is None:
        eig = sym_eig(g1)
    U = eig.eigenvectors
    b = np.atleast_2d(np.asarray(b, dtype=float))
    return ((b @ U) / (eig.eigenvalues + lam)) @ U.T


def lambda_grid(eig: EigenDecomposition, grid_size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Descending log-spaced grid over ``[max(lam_n, floor * lam_1), lam_1]``."""
    top = eig.largest
    if not top > 0:
        raise DegenerateDataError("Gram matrix has no positive eigenvalue")
    bottom = max(eig.smallest, SPECTRAL_FLOOR * top)
    return np.geomspace(top, bottom, grid_size)


def _spectral_norms(eig: EigenDecomposition, b, lambdas):
    """Residual norm and seminorm for each lambda from the spectral factors.

    With ``C = B U``: residual^2 = sum lam^2 |C_k|^2 / (s_k + lam)^2 and
    seminorm^2 = sum s_k |C_k|^2 / (s_k + lam)^2.
    """
    s = np.maximum(eig.eigenvalues, 0.0)
    c2 = np.sum((np.atleast_2d(b) @ eig.eigenvectors) ** 2, axis=0)
    lam = np.asarray(lambdas, dtype=float)[:, None]
    denom = (s[None, :] + lam) ** 2
    res = np.sqrt(np.sum(lam**2 * c2 / denom, axis=1))
    semi = np.sqrt(np.sum(s * c2 / denom, axis=1))
    return res, semi


def lcurve_select(g1, eig: EigenDecomposition, b, grid_size: int = DEFAULT_GRID_SIZE) -> LCurveTrace:
    """Pick lambda at the maximum signed curvature of the log-log L-curve.

    The curve ``(log ||V G1 - B||_F, log sqrt(trace(V G1 V^T)))`` is
    sampled on :func:`lambda_grid` and differentiated with respect to
    ``log lambda``.

    Raises
    ------
    DegenerateDataError
        If ``b`` is zero or the seminorm vanishes on the whole grid.
    """
    if grid_size < 10:
        raise ValueError("grid_size must be at least 10")
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if not np.any(b):
        raise DegenerateDataError("right-hand side is identically zero; nothing to fit")
    lambdas = lambda_grid(eig, grid_size)
    res, semi = _spectral_norms(eig, b, lambdas)
    if not np.any(semi > 0):
        raise DegenerateDataError("solution seminorm is zero on the whole lambda grid")
    if not np.all(res > 0):
        raise DegenerateDataError("residual vanishes on the lambda grid")
    if lambdas[-1] >= lambdas[0]:
        # flat spectrum (e.g. n = 1): [lam_n, lam_1] is a single point
        return LCurveTrace(lambdas, res, semi, np.zeros(grid_size - 2), 0)
    xs, ys, ps = np.log(res), np.log(semi), np.log(lambdas)
    idx, _ = max_curvature_point(xs, ys, ps)
    return LCurveTrace(
        lambdas=lambdas,
        residual_norms=res,
        seminorms=semi,
        curvatures=signed_curvature(xs, ys, ps),
        selected_index=idx,
    )


def fit(ts: TimeSeries, kernel: KernelSpec, grid_size: int = DEFAULT_GRID_SIZE, *,
        g1=None, eig: EigenDecomposition | None = None) -> TrajectoryFit:
    """Fit derivative and trajectory to a noisy time series.

    Parameters
    ----------
    ts : TimeSeries
        Observations and the exact initial value. Times are shifted by
        ``-ts.t0`` internally.
    kernel : KernelSpec
        Kernel on the time axis.
    grid_size : int
        Number of lambda candidates for the L-curve.
    g1, eig : optional
        Precomputed Gram matrix for the shifted times and its
        eigendecomposition. Both depend only on times and kernel, so they
        can be shared between fits of different noise realizations.

    Returns
    -------
    TrajectoryFit
    """
    tau = ts.times - ts.t0
    if g1 is None:
        g1 = gram_g1(kernel, tau)
        eig = None
    if eig is None:
        eig = sym_eig(g1)
    b = assemble_b(ts)
    trace = lcurve_select(g1, eig, b, grid_size)
    lam = trace.lambda_star
    V = coefficients(g1, b, lam, eig)
    psi = psi_matrix(kernel, tau, tau)
    derivs = (V @ psi).T
    traj = ts.x0[None, :] + (V @ g1).T
    return TrajectoryFit(
        kernel=kernel,
        times=ts.times.copy(),
        t0=ts.t0,
        x0=ts.x0.copy(),
        lambda_star=lam,
        v_lambda=V,
        g1=g1,
        fitted_derivatives=derivs,
        fitted_trajectory=traj,
        lcurve=trace,
    )


def eval_derivative(fit: TrajectoryFit, t):
    """Continuous derivative estimate ``V psi(t)``.

    Scalar ``t`` gives a ``(d,)`` vector; an array of ``m`` times gives
    ``(m, d)``.
    """
    t_arr = np.asarray(t, dtype=float)
    psi = psi_matrix(fit.kernel, fit.shifted_times, t_arr.reshape(-1) - fit.t0)
    out = (fit.v_lambda @ psi).T
    return out[0] if t_arr.ndim == 0 else out


def trajectory_from_quadrature(fit: TrajectoryFit, index: int, tol: float = 1e-10) -> np.ndarray:
    """``x0 + int_{t0}^{t_index}`` of the continuous derivative, by quadrature.

    Independent route to row ``index`` of ``fit.fitted_trajectory``.
    ``tol`` is raised to the rounding floor of the integrand when the
    coefficients are large (tiny lambda), where the sum ``V psi(s)``
    cancels heavily and no quadrature can resolve below it.
    """
    t_end = fit.times[index]
    span = t_end - fit.t0
    out = np.empty(fit.x0.size)
    for c in range(fit.x0.size):
        row = fit.v_lambda[c]
        # |psi_j(s)| <= t_j because the kernels are bounded by 1
        floor = np.finfo(float).eps * float(np.abs(row) @ fit.shifted_times) * max(1.0, span)

        def f(s, row=row):
            return row @ psi_matrix(fit.kernel, fit.shifted_times, s - fit.t0)

        out[c] = fit.x0[c] + adaptive_quadrature(f, fit.t0, t_end, max(tol, floor), max_panels=20000)
    return out


def residual_identity_check(fit: TrajectoryFit, b) -> tuple[float, float]:
    """Both sides of ``||G v - b||_2 = ||V G1 - B||_F``.

    The left side builds ``G = G1 kron I_d`` explicitly, so this is only
    meant for small problems (``n * d <= 400``). Products are accumulated
    in extended precision: at a small ``lambda`` the residual is a tiny
    difference of large terms, and double-precision rounding would swamp
    the comparison.
    """
    V = np.asarray(fit.v_lambda, dtype=np.longdouble)
    d, n = V.shape
    if n * d > 400:
        raise ValueError(f"n*d = {n * d} exceeds the 400 limit of the explicit Kronecker check")
    B = np.atleast_2d(np.asarray(b, dtype=np.longdouble))
    G1 = np.asarray(fit.g1, dtype=np.longdouble)
    G = np.kron(G1, np.eye(d, dtype=np.longdouble))
    v = V.T.reshape(-1)  # vec stacks the columns v_1, ..., v_n
    lhs = np.sqrt(np.sum((G @ v - B.T.reshape(-1)) ** 2))
    rhs = np.sqrt(np.sum((V @ G1 - B) ** 2))
    return float(lhs), float(rhs)


def seminorm_identity_check(fit: TrajectoryFit) -> tuple[float, float]:
    """Both sides of ``v^T G v = trace(V G1 V^T)``, as in :func:`residual_identity_check`."""
    V = np.asarray(fit.v_lambda, dtype=np.longdouble)
    d, n = V.shape
    if n * d > 400:
        raise ValueError(f"n*d = {n * d} exceeds the 400 limit of the explicit Kronecker check")
    G1 = np.asarray(fit.g1, dtype=np.longdouble)
    G = np.kron(G1, np.eye(d, dtype=np.longdouble))
    v = V.T.reshape(-1)
    return float(v @ G @ v), float(np.trace(V @ G1 @ V.T))
