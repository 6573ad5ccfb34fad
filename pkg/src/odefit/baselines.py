"""Comparator methods: finite differences, TV-regularized differentiation
and SINDy with a polynomial dictionary."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import solveh_banded

__all__ = [
    "finite_difference",
    "tv_derivative",
    "TVInfo",
    "poly_library",
    "monomial_name",
    "SindyResult",
    "stls",
]


def finite_difference(times, values) -> np.ndarray:
    """Central differences inside, first-order one-sided at both ends.

    Works on nonuniform grids: interior rows are
    ``(y[i+1] - y[i-1]) / (t[i+1] - t[i-1])``.
    """
    t = np.asarray(times, dtype=float).reshape(-1)
    y = np.asarray(values, dtype=float)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    if t.size < 2:
        raise ValueError("finite differences need at least 2 samples")
    if y.shape[0] != t.size:
        raise ValueError("values and times differ in length")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    d = np.empty_like(y)
    d[1:-1] = (y[2:] - y[:-2]) / (t[2:] - t[:-2])[:, None]
    d[0] = (y[1] - y[0]) / (t[1] - t[0])
    d[-1] = (y[-1] - y[-2]) / (t[-1] - t[-2])
    return d[:, 0] if squeeze else d


# TV regularization ===========================================================
@dataclass
class TVInfo:
    iterations: int
    converged: bool
    objective: list[float] = field(default_factory=list)


def _tv_objective(w, g, alpha, h, eps):
    q = (w[2:] - 2.0 * w[1:-1] + w[:-2]) / h**2
    return 0.5 * h * np.sum((w - g) ** 2) + alpha * h * (np.sum(np.sqrt(q * q + eps * eps)) + eps)


def _second_difference(m):
    """Second differences of ``w_0..w_m`` with the ``w_0 = 0`` column dropped.

    Shape ``(m - 1, m)``; row ``i`` reads ``w_i - 2 w_{i+1} + w_{i+2}``.
    """
    return sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m - 1, m), format="csr")


def _banded_upper(mat, bw):
    """Upper banded storage of a sparse symmetric matrix for ``solveh_banded``."""
    n = mat.shape[0]
    ab = np.zeros((bw + 1, n))
    for k in range(bw + 1):
        ab[bw - k, k:] = mat.diagonal(k)
    return ab


def tv_derivative(times, y, alpha: float, max_iters: int = 100, eps: float = 1e-8,
                  rtol: float = 1e-6, return_info: bool = False):
    r"""Derivative of uniformly sampled data by TV-regularized antidifferentiation.

    Minimizes the discretized problem

    .. math::
        \tfrac12 h \|A u - y\|^2 + \alpha h \sum_i \sqrt{((Du)_i)^2 + \epsilon^2}

    with ``A`` the left-rectangle running sum and ``D`` forward differences,
    by lagged-diffusivity fixed-point iteration. ``y[0]`` sits at the anchor
    time where the antiderivative vanishes, so callers subtract the initial
    value first.

    The problem is solved for ``w = A u`` (the fitted antiderivative),
    which turns every fixed-point step into a banded solve.

    Parameters
    ----------
    times : (n,) array
        Uniformly spaced times; nonuniform grids are rejected.
    y : (n,) array
        Data minus the initial value.
    alpha : float
        Regularization weight.
    max_iters : int
        Iteration cap; hitting it issues a RuntimeWarning.
    eps : float
        Smoothing of the absolute value in the TV term.
    rtol : float
        Stop once ``||u_new - u|| <= rtol * ||u||``.
    return_info : bool
        Also return a :class:`TVInfo` with the objective per iteration.

    Returns
    -------
    u : (n,) ndarray
        ``u[j]`` is the slope on ``[t_j, t_{j+1}]``; the last entry repeats
        the one before it.
    """
    t = np.asarray(times, dtype=float).reshape(-1)
    g = np.asarray(y, dtype=float).reshape(-1)
    n = t.size
    if n < 4:
        raise ValueError("TV differentiation needs at least 4 samples")
    if g.size != n:
        raise ValueError("y and times differ in length")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    dt = np.diff(t)
    h = float(np.mean(dt))
    if not h > 0 or np.max(np.abs(dt - h)) > 1e-9 * max(1.0, abs(h)):
        raise ValueError("TV differentiation requires uniformly spaced, increasing times")

    m = n - 1
    E = _second_difference(m)
    EEt = _banded_upper(E @ E.T, 2)
    rhs = E @ g[1:]
    w = g.copy()
    w[0] = 0.0
    u = np.diff(w) / h
    info = TVInfo(iterations=0, converged=False)
    info.objective.append(_tv_objective(w, g, alpha, h, eps))
    scale = alpha / h**4
    for it in range(1, max_iters + 1):
        q = (w[2:] - 2.0 * w[1:-1] + w[:-2]) / h**2
        # Each step minimizes the quadratic majorizer, whose normal equations
        # are (I + E^T S E) w = g with S = scale / sqrt(q^2 + eps^2). S spans
        # many orders of magnitude, so solve the equivalent Woodbury form
        # (S^{-1} + E E^T) z = E g, w = g - E^T z, which stays well scaled.
        s_inv = np.sqrt(q * q + eps * eps) / scale
        ab = EEt.copy()
        ab[2] += s_inv
        z = solveh_banded(ab, rhs, check_finite=False)
        w_new = np.empty_like(w)
        w_new[0] = 0.0
        w_new[1:] = g[1:] - E.T @ z
        u_new = np.diff(w_new) / h
        step = np.linalg.norm(u_new - u)
        w, u = w_new, u_new
        info.iterations = it
        info.objective.append(_tv_objective(w, g, alpha, h, eps))
        if step <= rtol * max(np.linalg.norm(u), np.finfo(float).tiny):
            info.converged = True
            break
    if not info.converged:
        warnings.warn(
            f"TV iteration stopped after {max_iters} steps without reaching rtol={rtol:g}",
            RuntimeWarning,
            stacklevel=2,
        )
    out = np.append(u, u[-1])
    return (out, info) if return_info else out


# SINDy =======================================================================
def _multi_indices(d: int, degree: int):
    for p in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), p):
            alpha = [0] * d
            for i in combo:
                alpha[i] += 1
            yield tuple(alpha)


def monomial_name(alpha, names=None) -> str:
    """Readable name such as ``"x1*x2^2"`` for a multi-index."""
    names = names or [f"x{i + 1}" for i in range(len(alpha))]
    parts = [nm if a == 1 else f"{nm}^{a}" for nm, a in zip(names, alpha) if a]
    return "*".join(parts) or "1"


def poly_library(states, degree: int):
    """All monomials of total degree <= ``degree``, graded lexicographic.

    Returns
    -------
    theta : (n, J) ndarray
    indices : list of tuple
        Exponent multi-index of each column; ``J = C(d + degree, degree)``.
    """
    X = np.asarray(states, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    d = X.shape[1]
    indices = list(_multi_indices(d, degree))
    theta = np.empty((X.shape[0], len(indices)))
    for col, alpha in enumerate(indices):
        theta[:, col] = np.prod(X ** np.asarray(alpha), axis=1)
    assert len(indices) == math.comb(d + degree, degree)
    return theta, indices


@dataclass(frozen=True)
class SindyResult:
    """Sparse regression result ``xdot ~ theta @ coefficients``."""

    dictionary_names: list
    coefficients: np.ndarray
    threshold: float
    iterations_used: int
    rank_deficient: bool = False
    support_history: tuple = ()

    def predict(self, theta):
        return np.asarray(theta) @ self.coefficients


def stls(theta, xdot, threshold: float, max_iters: int = 10, names=None) -> SindyResult:
    """Sequentially thresholded least squares.

    Solves the full least-squares problem, zeroes coefficients smaller than
    ``threshold`` and refits each column on its surviving support until
    the support stops changing or ``max_iters`` refits were made.

    Parameters
    ----------
    theta : (n, J) array
        Dictionary evaluated at the states.
    xdot : (n, d) array
        Derivative targets.
    threshold : float
        Positive magnitude cut.
    max_iters : int
        Maximum number of threshold-and-refit rounds.
    names : list, optional
        Column descriptors stored on the result.
    """
    Theta = np.asarray(theta, dtype=float)
    Y = np.asarray(xdot, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    n, J = Theta.shape
    if Y.shape[0] != n:
        raise ValueError("theta and xdot differ in row count")
    if n < J:
        warnings.warn(f"underdetermined library: {n} samples for {J} functions", RuntimeWarning, stacklevel=2)

    W, _, rank, _ = np.linalg.lstsq(Theta, Y, rcond=None)
    rank_deficient = rank < J
    support = np.abs(W) >= threshold
    history = [int(support.sum())]
    iters = 0
    for iters in range(1, max_iters + 1):
        W = np.where(support, W, 0.0)
        for col in range(Y.shape[1]):
            active = support[:, col]
            if not active.any():
                continue
            sol, _, r, _ = np.linalg.lstsq(Theta[:, active], Y[:, col], rcond=None)
            rank_deficient |= r < active.sum()
            W[active, col] = sol
        new_support = support & (np.abs(W) >= threshold)
        history.append(int(new_support.sum()))
        if np.array_equal(new_support, support):
            break
        support = new_support
    W = np.where(np.abs(W) >= threshold, W, 0.0)
    return SindyResult(
        dictionary_names=list(names) if names is not None else [],
        coefficients=W,
        threshold=float(threshold),
        iterations_used=iters,
        rank_deficient=bool(rank_deficient),
        support_history=tuple(history),
    )
