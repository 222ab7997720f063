"""Numerical laboratory for non-divergence elliptic equations with Dini coefficients."""

__version__ = "0.1.0"
