"""Probabilistic detection and estimation of conic sections from noisy data."""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    ConicFD,
    ConicQuad,
    ConicType,
    DegenerateConicError,
    StandardForm,
    angle_support,
    canonical_fd,
    classify_quad,
    fd_to_point,
    fd_to_quad,
    fd_to_standard,
    nearest_point_angle,
    quad_to_fd,
    radius,
    standard_to_fd,
    wrap_angle,
)
