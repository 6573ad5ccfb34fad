"""Stationary scalar kernels and their exact integrals.

Every kernel here depends only on the distance ``r = |s - t|`` through a
profile ``kappa(r)``. Two antiderivatives of the profile give all the
integrals the time-domain fit needs in closed form:

* ``cumulative(x) = int_0^x kappa(|u|) du`` (odd in ``x``),
* ``cumulative2(x) = int_0^x cumulative(u) du`` (even in ``x``).

Then ``int_0^T k(s, t) ds = cumulative(T - t) + cumulative(t)`` and
``int_0^a int_0^b k(s, t) ds dt = C2(a) + C2(b) - C2(a - b)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .numerics import erf, erf_antideriv

__all__ = [
    "KernelSpec",
    "gaussian",
    "matern",
    "kernel_eval",
    "single_integral",
    "double_integral",
    "gram_g1",
    "psi_matrix",
    "gram_state",
]

_FAMILIES = ("gaussian", "matern")

# Matérn half-integer profiles exp(-r) * sum_k a_k r^k in r = sqrt(2 nu) d / l.
_MATERN_POLY = {
    0.5: (1.0,),
    1.5: (1.0, 1.0),
    2.5: (1.0, 1.0, 1.0 / 3.0),
}


@dataclass(frozen=True)
class KernelSpec:
    """Scalar kernel family with hyperparameters.

    Parameters
    ----------
    family : {"gaussian", "matern"}
    length_scale : float
        Positive length scale ``l``.
    nu : float, optional
        Matérn smoothness, one of 0.5, 1.5, 2.5. Must be None for Gaussian.
    """

    family: str
    length_scale: float
    nu: float | None = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {_FAMILIES}")
        if not (np.isfinite(self.length_scale) and self.length_scale > 0):
            raise ValueError(f"length_scale must be positive, got {self.length_scale!r}")
        if self.family == "matern":
            if self.nu not in _MATERN_POLY:
                raise ValueError(f"Matérn nu must be one of {sorted(_MATERN_POLY)}, got {self.nu!r}")
        elif self.nu is not None:
            raise ValueError("nu is only meaningful for the Matérn family")

    # distance profile and its antiderivatives --------------------------------
    @property
    def _rate(self) -> float:
        return math.sqrt(2.0 * self.nu) / self.length_scale

    def profile(self, r):
        """Kernel value as a function of distance ``r >= 0``."""
        r = np.abs(np.asarray(r, dtype=float))
        l = self.length_scale
        if self.family == "gaussian":
            return np.exp(-0.5 * (r / l) ** 2)
        z = self._rate * r
        poly = np.zeros_like(z)
        for a in reversed(_MATERN_POLY[self.nu]):
            poly = poly * z + a
        return poly * np.exp(-z)

    def profile_sq(self, r2):
        """Kernel value from a squared distance."""
        r2 = np.asarray(r2, dtype=float)
        if self.family == "gaussian":
            return np.exp(-0.5 * r2 / self.length_scale**2)
        return self.profile(np.sqrt(np.maximum(r2, 0.0)))

    def cumulative(self, x):
        """``int_0^x kappa(|u|) du``; odd in ``x``."""
        x = np.asarray(x, dtype=float)
        l = self.length_scale
        if self.family == "gaussian":
            c = math.sqrt(2.0) * l
            return math.sqrt(math.pi / 2.0) * l * erf(x / c)
        rate = self._rate
        z = rate * np.abs(x)
        ez = np.exp(-z)
        out = np.zeros_like(z)
        # int_0^z r^k e^{-r} dr = k! - e^{-z} sum_{j<=k} k!/j! z^j
        for k, a in enumerate(_MATERN_POLY[self.nu]):
            tail = sum(math.factorial(k) / math.factorial(j) * z**j for j in range(k + 1))
            out += a * (math.factorial(k) - ez * tail)
        return np.sign(x) * out / rate

    def cumulative2(self, x):
        """``int_0^x cumulative(u) du``; even in ``x``."""
        x = np.asarray(x, dtype=float)
        l = self.length_scale
        if self.family == "gaussian":
            c = math.sqrt(2.0) * l
            return math.sqrt(math.pi) * l * l * (erf_antideriv(x / c) - erf_antideriv(0.0))
        rate = self._rate
        z = rate * np.abs(x)
        ez = np.exp(-z)
        out = np.zeros_like(z)
        # int_0^z (k! - e^{-r} sum_j k!/j! r^j) dr
        #   = k! z - (k+1)! + e^{-z} sum_{i<=k} (k-i+1) k!/i! z^i
        for k, a in enumerate(_MATERN_POLY[self.nu]):
            fk = math.factorial(k)
            tail = sum((k - i + 1) * fk / math.factorial(i) * z**i for i in range(k + 1))
            out += a * (fk * z - (k + 1) * fk + ez * tail)
        return out / rate**2


def gaussian(length_scale: float) -> KernelSpec:
    return KernelSpec("gaussian", float(length_scale))


def matern(nu: float, length_scale: float) -> KernelSpec:
    return KernelSpec("matern", float(length_scale), float(nu))


# Time-axis kernel operations =================================================
def kernel_eval(k: KernelSpec, s, t):
    """``k(s, t)``, broadcasting over ``s`` and ``t``."""
    return k.profile(np.asarray(s, dtype=float) - np.asarray(t, dtype=float))


def single_integral(k: KernelSpec, t_upper, t):
    """``int_0^{t_upper} k(s, t) ds``, broadcasting over both arguments."""
    t_upper = np.asarray(t_upper, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t_upper < 0):
        raise ValueError("t_upper must be nonnegative")
    return k.cumulative(t_upper - t) + k.cumulative(t)


def double_integral(k: KernelSpec, t_i, t_j):
    """``int_0^{t_i} int_0^{t_j} k(s, t) ds dt``; symmetric in its bounds."""
    t_i = np.asarray(t_i, dtype=float)
    t_j = np.asarray(t_j, dtype=float)
    if np.any(t_i < 0) or np.any(t_j < 0):
        raise ValueError("integration bounds must be nonnegative")
    return k.cumulative2(t_i) + k.cumulative2(t_j) - k.cumulative2(t_i - t_j)


def _check_times(times, allow_zero: bool = False) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(times)):
        raise ValueError("times must be finite")
    if times[0] < 0 or (times[0] == 0 and not allow_zero):
        raise ValueError("times must be positive")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing (no duplicates)")
    return times


def gram_g1(k: KernelSpec, times) -> np.ndarray:
    """Gram matrix of double integrals ``G1[i, j] = int_0^{t_i} int_0^{t_j} k``.

    Only the upper triangle is evaluated; the lower one is a mirror copy, so
    the result is exactly symmetric.
    """
    t = _check_times(times)
    n = t.size
    c2 = k.cumulative2(t)
    G = np.empty((n, n))
    # row-blocked to bound the temporary size for large n
    block = max(1, 2_000_000 // max(n, 1))
    for start in range(0, n, block):
        stop = min(n, start + block)
        rows = t[start:stop, None]
        G[start:stop] = c2[start:stop, None] + c2[None, :] - k.cumulative2(rows - t[None, :])
    iu = np.triu_indices(n, 1)
    G[(iu[1], iu[0])] = G[iu]
    return G


def psi_matrix(k: KernelSpec, times, eval_times) -> np.ndarray:
    """Basis matrix with entry ``(j, i) = int_0^{t_j} k(s, eval_times[i]) ds``.

    A leading ``t_j = 0`` is allowed and gives a zero row.
    """
    t = _check_times(times, allow_zero=True)
    e = np.asarray(eval_times, dtype=float).reshape(-1)
    if not np.all(np.isfinite(e)):
        raise ValueError("eval_times must be finite")
    return k.cumulative(t[:, None] - e[None, :]) + k.cumulative(e)[None, :]


def _as_points(points) -> np.ndarray:
    try:
        X = np.asarray(points, dtype=float)
    except ValueError as exc:
        raise ValueError(f"dimension mismatch among points: {exc}") from exc
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("points must be a sequence of d-vectors")
    if not np.all(np.isfinite(X)):
        raise ValueError("points must be finite")
    return X


def gram_state(k: KernelSpec, points, other=None) -> np.ndarray:
    """Kernel matrix ``k(|x_i - x_j|)`` over Euclidean state vectors.

    With ``other`` given, returns the cross matrix between ``points`` and
    ``other``.
    """
    X = _as_points(points)
    if other is None:
        K = k.profile_sq(cdist(X, X, "sqeuclidean"))
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, 1.0)
        return K
    Y = _as_points(other)
    if Y.shape[1] != X.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    return k.profile_sq(cdist(X, Y, "sqeuclidean"))
