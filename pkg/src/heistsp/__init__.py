"""Heisenberg group geometry, multiscale beta numbers of curves, and numerical checks of the
curvature inequalities behind them."""

from .heisenberg import MetricCtx, distance, multiply, inverse, dilate, koranyi_norm

__all__ = ["MetricCtx", "distance", "multiply", "inverse", "dilate", "koranyi_norm"]
__version__ = "0.1.0"
