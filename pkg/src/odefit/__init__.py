"""Derivative, trajectory and vector-field estimation from noisy time series."""
