"""Stochastic calculus on random horizons of interval type on a uniform grid."""

__version__ = "0.1.0"
