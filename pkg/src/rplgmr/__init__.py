"""Robust piecewise-linear Gaussian mixture regression for depth images."""
