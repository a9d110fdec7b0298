"""Numerical laboratory for line-soliton stability of the KP-II equation."""

from .errors import *  # noqa: F401,F403
from .kernels import BACKEND
from .spectral import Grid, SpectralField, WeightSpec

__all__ = ["BACKEND", "Grid", "SpectralField", "WeightSpec"]
__version__ = "0.1.0"
