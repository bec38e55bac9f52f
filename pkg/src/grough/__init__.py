"""Numerics for rough paths driven by G-Brownian motion on uniform time grids."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .gbm_sim import VolatilityBand, ito_lift, quadratic_variation, stratonovich_lift
from .rough_core import ControlledPath, GridPath, LevelTwo, RoughPath, TimeGrid

__all__ = [
    "ControlledPath", "GridPath", "LevelTwo", "RoughPath", "TimeGrid",
    "VolatilityBand", "ito_lift", "quadratic_variation", "stratonovich_lift",
]
