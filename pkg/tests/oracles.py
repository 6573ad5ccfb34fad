"""Independent reference computations used across the test modules."""

from __future__ import annotations

import math

import numpy as np

from odefit.numerics import adaptive_quadrature


def profile(family: str, nu, l: float, r):
    """Kernel profile written out from its textbook formula."""
    r = np.abs(np.asarray(r, dtype=float))
    if family == "gaussian":
        return np.exp(-(r**2) / (2 * l * l))
    z = math.sqrt(2 * nu) * r / l
    if nu == 0.5:
        return np.exp(-z)
    if nu == 1.5:
        return (1 + z) * np.exp(-z)
    return (1 + z + z * z / 3) * np.exp(-z)


def single_integral_quad(family, nu, l, t_upper, t, tol=1e-13):
    """int_0^{t_upper} k(s, t) ds by adaptive quadrature, split at the kink s = t."""
    return adaptive_quadrature(lambda s: profile(family, nu, l, s - t), 0.0, t_upper, tol, breakpoints=[t])


def double_integral_quad(family, nu, l, a, b, tol=1e-13):
    """int_0^a int_0^b k(s, t) ds dt as a 1-d integral over the lag u = s - t.

    The set {s in [0, b], t in [0, a], s - t = u} has length
    max(0, min(b, a + u) - max(0, u)).
    """
    def f(u):
        return profile(family, nu, l, u) * np.maximum(0.0, np.minimum(b, a + u) - np.maximum(0.0, u))

    return adaptive_quadrature(f, -a, b, tol, breakpoints=[0.0, b - a])


def lotka_volterra(x, alpha=0.7, beta=0.007, gamma=1.0, delta=0.007):
    x = np.asarray(x, dtype=float)
    return np.stack([alpha * x[..., 0] - beta * x[..., 0] * x[..., 1],
                     delta * x[..., 0] * x[..., 1] - gamma * x[..., 1]], axis=-1)


def lorenz63(x, sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    x = np.asarray(x, dtype=float)
    return np.stack([sigma * (x[..., 1] - x[..., 0]),
                     x[..., 0] * (rho - x[..., 2]) - x[..., 1],
                     x[..., 0] * x[..., 1] - beta * x[..., 2]], axis=-1)


def rk4(f, x0, t_end, steps):
    """Classical fixed-step Runge-Kutta; returns the state at t_end."""
    x = np.asarray(x0, dtype=float)
    h = t_end / steps
    for _ in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def _split(a):
    # Veltkamp splitting: a = hi + lo with 26-bit halves
    c = 134217729.0 * a
    hi = c - (c - a)
    return hi, a - hi


def exact_residual(a, x, b):
    """``b - a x`` correctly rounded, from error-free products and ``math.fsum``."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    p = a * x[None, :]
    a_hi, a_lo = _split(a)
    x_hi, x_lo = _split(x[None, :])
    e = ((a_hi * x_hi - p) + a_hi * x_lo + a_lo * x_hi) + a_lo * x_lo
    return np.array([math.fsum([bi, *(-pi), *(-ei)]) for bi, pi, ei in zip(b, p, e)])


def refined_solve(a, b, sweeps=4):
    """Solve ``a x = b`` to rounding accuracy by iterative refinement.

    Residuals are exact, so the forward error falls to double rounding as
    long as cond(a) * eps < 1; two such solutions of the same system can be
    compared far below cond(a) * eps.
    """
    x = np.linalg.solve(a, b)
    for _ in range(sweeps):
        x = x + np.linalg.solve(a, exact_residual(a, x, b))
    return x
