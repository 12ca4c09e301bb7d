"""Numerical laboratory for the volume-renormalized mass of asymptotically
hyperbolic initial data on radial warped-product grids."""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    RadialChart,
    FiberSpec,
    WarpedMetric,
    RadialField,
    build_chart,
    hyperbolic_metric,
    scalar_curvature,
    boundary_mean_curvature,
    integrate_ball,
    ball_volume,
    decay_rate_estimate,
)
