"""Scalar and matrix numerics shared by the fitting code.

Error function and its antiderivative, a checked symmetric eigensolver,
an adaptive Gauss-Kronrod quadrature used as an independent oracle, and
signed curvature of sampled parametric curves.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy import special

from .errors import ConvergenceError, DegenerateDataError

__all__ = [
    "EigenDecomposition",
    "erf",
    "erf_antideriv",
    "sym_eig",
    "adaptive_quadrature",
    "signed_curvature",
    "max_curvature_point",
]

_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)


def erf(x):
    """Error function, vectorized over ``x``."""
    return special.erf(x)


def erf_antideriv(x):
    r"""Antiderivative of erf with zero integration constant.

    .. math:: h(x) = x\,\mathrm{erf}(x) + e^{-x^2}/\sqrt{\pi}

    Even in ``x``; ``h(x) - |x|`` decays like a Gaussian tail.
    """
    x = np.asarray(x, dtype=float)
    return x * special.erf(x) + np.exp(-x * x) * _INV_SQRT_PI


# Eigendecomposition ==========================================================
@dataclass(frozen=True)
class EigenDecomposition:
    """Spectral decomposition ``A = U diag(eigenvalues) U^T``.

    Eigenvalues are sorted in descending order and column ``i`` of
    ``eigenvectors`` pairs with ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def largest(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def smallest(self) -> float:
        return float(self.eigenvalues[-1])

    def reconstruct(self) -> np.ndarray:
        U = self.eigenvectors
        return (U * self.eigenvalues) @ U.T


def sym_eig(a, rtol: float = 1e-12) -> EigenDecomposition:
    """Eigendecomposition of a dense symmetric matrix.

    Parameters
    ----------
    a : (n, n) array_like
        Symmetric matrix. Symmetry is checked to relative tolerance
        ``rtol`` (max-norm of ``a - a.T`` against max-norm of ``a``).
    rtol : float
        Symmetry tolerance.

    Returns
    -------
    EigenDecomposition
        Eigenvalues sorted descending with matching orthonormal vectors.

    Raises
    ------
    ValueError
        If ``a`` is not square or not symmetric.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ValueError(f"expected a nonempty square matrix, got shape {a.shape}")
    scale = np.max(np.abs(a))
    asym = np.max(np.abs(a - a.T)) if a.shape[0] > 1 else 0.0
    if asym > rtol * scale:
        raise ValueError(
            f"matrix is not symmetric: max|A - A^T| = {asym:.3e} "
            f"exceeds {rtol:g} * max|A| = {rtol * scale:.3e}"
        )
    # LAPACK reads only one triangle; symmetrize so both agree.
    if asym > 0:
        a = 0.5 * (a + a.T)
    w, U = la.eigh(a, check_finite=True)
    return EigenDecomposition(eigenvalues=w[::-1].copy(), eigenvectors=U[:, ::-1].copy())


# Adaptive quadrature =========================================================
# 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1].
_XGK = np.array([
    -0.991455371120812639206854697526329,
    -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926,
    -0.741531185599394439863864773280788,
    -0.586087235467691130294144845693013,
    -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
    0.207784955007898467600689403773245,
    0.405845151377397166906606412076961,
    0.586087235467691130294144845693013,
    0.741531185599394439863864773280788,
    0.864864423359769072789712788640926,
    0.949107912342758524526189684047851,
    0.991455371120812639206854697526329,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
    0.204432940075298892414161999234649,
    0.190350578064785409913256402421014,
    0.169004726639267902826583426598550,
    0.140653259715525918745189590510238,
    0.104790010322250183839876322541518,
    0.063092092629978553290700663189204,
    0.022935322010529224963732008058970,
])
_WG = np.zeros(15)
_WG[1::2] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
    0.381830050505118944950369775488975,
    0.279705391489276667901467771423780,
    0.129484966168869693270611432679082,
]


def _gk15(f, a, b):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    x = c + h * _XGK
    fx = np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)
    k = h * (_WGK @ fx)
    g = h * (_WG @ fx)
    return k, abs(k - g)


def adaptive_quadrature(f, a: float, b: float, tol: float = 1e-10,
                        breakpoints=(), max_panels: int = 5000) -> float:
    """Integrate ``f`` over ``[a, b]`` by global adaptive Gauss-Kronrod.

    ``f`` is called with a 1-d array of 15 nodes and must return values of
    the same shape (a constant is broadcast). Panels with the largest error
    estimate are bisected until the summed estimate drops below ``tol``.

    Parameters
    ----------
    f : callable
        Vectorized integrand.
    a, b : float
        Integration limits; ``b < a`` flips the sign.
    tol : float
        Absolute error target.
    breakpoints : sequence of float
        Interior points where ``f`` is not smooth; used as initial panel
        boundaries.
    max_panels : int
        Subdivision budget.

    Raises
    ------
    ConvergenceError
        If the budget is exhausted before reaching ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if a == b:
        return 0.0
    if b < a:
        return -adaptive_quadrature(f, b, a, tol, breakpoints, max_panels)
    edges = sorted({a, b, *(float(p) for p in breakpoints if a < p < b)})
    heap = []
    total = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e = _gk15(f, lo, hi)
        total += val
        err += e
        heapq.heappush(heap, (-e, lo, hi, val))
    while err > tol:
        if len(heap) >= max_panels:
            raise ConvergenceError(
                f"quadrature did not converge: error estimate {err:.3e} > tol {tol:.3e} "
                f"after {len(heap)} panels"
            )
        neg_e, lo, hi, val = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            # interval cannot be split further in floating point
            raise ConvergenceError(
                f"quadrature did not converge: panel [{lo!r}, {hi!r}] is unsplittable"
            )
        v1, e1 = _gk15(f, lo, mid)
        v2, e2 = _gk15(f, mid, hi)
        total += v1 + v2 - val
        err += e1 + e2 + neg_e
        heapq.heappush(heap, (-e1, lo, mid, v1))
        heapq.heappush(heap, (-e2, mid, hi, v2))
    # re-sum to shed the drift of the running total
    return float(sum(item[3] for item in heap))


# Curvature ===================================================================
def _three_point_derivatives(f, p):
    """First and second derivatives at interior points of a nonuniform grid."""
    h1 = p[1:-1] - p[:-2]
    h2 = p[2:] - p[1:-1]
    fm, f0, fp = f[:-2], f[1:-1], f[2:]
    d1 = (-h2 / (h1 * (h1 + h2)) * fm
          + (h2 - h1) / (h1 * h2) * f0
          + h1 / (h2 * (h1 + h2)) * fp)
    d2 = 2.0 * (fm / (h1 * (h1 + h2)) - f0 / (h1 * h2) + fp / (h2 * (h1 + h2)))
    return d1, d2


def signed_curvature(xs, ys, params) -> np.ndarray:
    r"""Signed curvature at the interior points of a sampled curve.

    .. math:: \kappa = \frac{x'y'' - y'x''}{(x'^2 + y'^2)^{3/2}}

    Derivatives are taken with respect to ``params`` by three-point central
    differences on the (possibly nonuniform) grid. Returns ``len(xs) - 2``
    values; entry ``i`` belongs to grid point ``i + 1``.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    p = np.asarray(params, dtype=float)
    if not (xs.shape == ys.shape == p.shape) or xs.ndim != 1:
        raise ValueError("xs, ys and params must be 1-d and of equal length")
    if len(p) < 3:
        raise ValueError("need at least 3 points")
    dp = np.diff(p)
    if not (np.all(dp > 0) or np.all(dp < 0)):
        raise ValueError("params must be strictly monotone")
    x1, x2 = _three_point_derivatives(xs, p)
    y1, y2 = _three_point_derivatives(ys, p)
    speed = x1 * x1 + y1 * y1
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = (x1 * y2 - y1 * x2) / speed**1.5
    return np.where(speed > 0, kappa, 0.0)


def max_curvature_point(xs, ys, params) -> tuple[int, float]:
    """Grid index of maximal signed curvature, endpoints excluded.

    Ties go to the smallest index.

    Raises
    ------
    DegenerateDataError
        If all points coincide.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 5:
        raise ValueError("need at least 5 points")
    if np.ptp(xs) == 0 and np.ptp(ys) == 0:
        raise DegenerateDataError("degenerate curve: all points identical")
    kappa = signed_curvature(xs, ys, params)
    i = int(np.argmax(kappa))
    return i + 1, float(kappa[i])
