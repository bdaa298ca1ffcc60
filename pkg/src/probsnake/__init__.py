"""Fast probabilistic snakes, with classical and region-based baselines."""

__version__ = "0.1.0"

from .curve import Curve, load_curve, normals, resample, save_curve
from .prob_snake import FitReport, PassConfig, Schedule, fit
from .raster import GrayImage, build_integral, load_image, make_scene, window_stats

__all__ = [
    "Curve",
    "FitReport",
    "GrayImage",
    "PassConfig",
    "Schedule",
    "build_integral",
    "fit",
    "load_curve",
    "load_image",
    "make_scene",
    "normals",
    "resample",
    "save_curve",
    "window_stats",
]
