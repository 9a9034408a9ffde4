"""Monocular RGB SLAM on a 3D Gaussian scene map.

Patch-graph visual odometry supplies online poses and sparse inverse
depths; the mapper grows and optimizes a splatted Gaussian map with
distance-gated insertion, clarity-driven densification and planar
regularization.
"""

from .scene import CameraFrame, Gaussian3D, GaussianMap, build_covariance

__version__ = "0.1.0"

__all__ = ["CameraFrame", "Gaussian3D", "GaussianMap", "build_covariance",
           "__version__"]
