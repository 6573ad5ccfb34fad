from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odefit.baselines import finite_difference, monomial_name, poly_library, stls, tv_derivative


class TestFiniteDifference:
    def test_linear(self):
        t = np.linspace(0, 1, 11)
        np.testing.assert_allclose(finite_difference(t, 2 * t), 2.0, atol=1e-12)

    def test_quadratic_interior(self):
        t = np.linspace(0, 2, 21)
        d = finite_difference(t, t**2)
        np.testing.assert_allclose(d[1:-1], 2 * t[1:-1], atol=1e-12)

    def test_nonuniform_interior_formula(self):
        t = np.array([0.0, 0.1, 0.35, 0.5, 1.0])
        y = np.array([1.0, 2.0, 0.0, 4.0, 3.0])
        d = finite_difference(t, y)
        assert d[2] == pytest.approx((4.0 - 2.0) / 0.4)
        assert d[0] == pytest.approx(10.0)
        assert d[-1] == pytest.approx(-2.0)

    def test_affine_exact_on_nonuniform_grid(self, rng):
        t = np.sort(rng.uniform(0, 5, 40))
        y = np.stack([3 * t - 1, -0.5 * t + 2], axis=1)
        np.testing.assert_allclose(finite_difference(t, y), np.tile([3.0, -0.5], (40, 1)), atol=1e-10)

    def test_too_short(self):
        with pytest.raises(ValueError):
            finite_difference([0.0], [1.0])

    def test_nonincreasing(self):
        with pytest.raises(ValueError):
            finite_difference([0.0, 1.0, 1.0], [1.0, 2.0, 3.0])


class TestTV:
    def test_constant_slope(self):
        t = np.linspace(0, 1, 101)
        u = tv_derivative(t, 1.7 * t, alpha=1e-8)
        np.testing.assert_allclose(u, 1.7, atol=1e-3)

    def test_large_alpha_flattens(self, rng):
        t = np.linspace(0, 1, 201)
        g = np.sin(4 * t) + 0.01 * rng.normal(size=t.size)
        g -= g[0]
        u0 = np.diff(g) / np.diff(t)  # exact minimizer without regularization
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            u = tv_derivative(t, g, alpha=1e6, max_iters=300)
        assert np.var(u) <= 1e-6 * np.var(u0)

    def test_piecewise_constant_slope(self):
        t = np.linspace(0, 2, 201)
        g = np.where(t < 1, t, 1 + 3 * (t - 1))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            u = tv_derivative(t, g, alpha=1e-6)
        assert np.median(np.abs(u[:90] - 1)) <= 1e-2
        assert np.median(np.abs(u[110:] - 3)) <= 1e-2

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10**6), log_alpha=st.floats(-8, 1), log_eps=st.floats(-8, -2))
    def test_objective_decreases(self, seed, log_alpha, log_eps):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 120))
        t = np.linspace(0, rng.uniform(0.5, 5), n)
        g = np.cumsum(rng.normal(size=n)) * 0.1
        g -= g[0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            _, info = tv_derivative(t, g, 10**log_alpha, max_iters=40, eps=10**log_eps, return_info=True)
        obj = np.array(info.objective)
        assert np.all(np.diff(obj) <= 1e-10 * np.abs(obj[:-1]))

    def test_nonconvergence_warns(self):
        t = np.linspace(0, 1, 50)
        g = np.sin(6 * t)
        with pytest.warns(RuntimeWarning):
            _, info = tv_derivative(t, g - g[0], 1e-3, max_iters=1, return_info=True)
        assert not info.converged
        assert info.iterations == 1

    def test_nonuniform_rejected(self):
        with pytest.raises(ValueError):
            tv_derivative([0, 0.1, 0.3, 0.4, 0.5], np.zeros(5), 1.0)

    def test_alpha_must_be_positive(self):
        with pytest.raises(ValueError):
            tv_derivative(np.linspace(0, 1, 10), np.zeros(10), 0.0)


class TestPolyLibrary:
    def test_degree_one(self):
        theta, idx = poly_library(np.array([[2.0, 3.0]]), 1)
        np.testing.assert_array_equal(theta, [[1.0, 2.0, 3.0]])
        assert [monomial_name(a) for a in idx] == ["1", "x1", "x2"]

    def test_degree_two_count(self):
        theta, idx = poly_library(np.ones((4, 2)), 2)
        assert theta.shape == (4, 6)

    def test_unit_vector_row(self):
        theta, idx = poly_library(np.array([[1.0, 0.0, 0.0]]), 2)
        np.testing.assert_array_equal(theta[0], [1, 1, 0, 0, 1, 0, 0, 0, 0, 0])

    @pytest.mark.parametrize("d,degree", [(1, 0), (1, 3), (2, 2), (3, 2), (5, 2), (4, 3)])
    def test_column_count(self, d, degree):
        theta, idx = poly_library(np.ones((2, d)), degree)
        assert theta.shape[1] == len(idx) == math.comb(d + degree, degree)
        assert len(set(idx)) == len(idx)

    def test_values(self, rng):
        X = rng.normal(size=(6, 3))
        theta, idx = poly_library(X, 3)
        for col, alpha in enumerate(idx):
            np.testing.assert_allclose(theta[:, col], X[:, 0] ** alpha[0] * X[:, 1] ** alpha[1] * X[:, 2] ** alpha[2])

    def test_names(self):
        assert monomial_name((1, 2, 0)) == "x1*x2^2"
        assert monomial_name((0, 1), ["S", "I"]) == "I"


class TestSTLS:
    def test_plant_and_recover(self, rng):
        X = rng.normal(size=(200, 3))
        theta, _ = poly_library(X, 2)
        W0 = np.zeros((10, 3))
        W0[1, 0], W0[5, 0], W0[2, 1], W0[9, 2], W0[0, 2] = 1.5, -0.7, 2.0, 0.3, -4.0
        res = stls(theta, theta @ W0, threshold=0.1)
        np.testing.assert_allclose(res.coefficients, W0, atol=1e-8)
        assert not res.rank_deficient

    def test_threshold_above_everything(self, rng):
        theta = rng.normal(size=(50, 4))
        y = theta @ np.array([[0.1], [0.2], [0.0], [-0.3]])
        res = stls(theta, y, threshold=10.0)
        np.testing.assert_array_equal(res.coefficients, 0.0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6), threshold=st.floats(0.01, 2.0))
    def test_support_shrinks_and_magnitudes(self, seed, threshold):
        rng = np.random.default_rng(seed)
        theta = rng.normal(size=(40, 8))
        y = theta @ rng.normal(size=(8, 2)) + 0.5 * rng.normal(size=(40, 2))
        res = stls(theta, y, threshold)
        hist = res.support_history
        assert all(a >= b for a, b in zip(hist, hist[1:]))
        nz = res.coefficients[res.coefficients != 0]
        assert np.all(np.abs(nz) >= threshold)

    def test_rank_deficient_flagged(self, rng):
        theta = rng.normal(size=(30, 3))
        theta = np.hstack([theta, theta[:, :1]])
        res = stls(theta, theta[:, 1:2] * 2.0, threshold=0.5)
        assert res.rank_deficient

    def test_underdetermined_warns(self, rng):
        with pytest.warns(RuntimeWarning):
            stls(rng.normal(size=(3, 6)), rng.normal(size=(3, 1)), threshold=0.1)

    def test_predict(self, rng):
        theta = rng.normal(size=(20, 3))
        res = stls(theta, theta @ np.array([[1.0], [0.0], [2.0]]), threshold=0.5)
        np.testing.assert_allclose(res.predict(theta), theta @ res.coefficients)
