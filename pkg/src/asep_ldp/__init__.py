"""Exact exponents, Fredholm-determinant numerics and Monte Carlo checks for
the asymmetric simple exclusion process started from step initial data."""

__version__ = "0.1.0"

from .exact_rates import FractionalOrder, ModelParams  # noqa: E402,F401
