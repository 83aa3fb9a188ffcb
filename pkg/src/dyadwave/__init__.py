"""Randomized dyadic cubes, splines and wavelets on finite quasi-metric measure spaces."""

__version__ = "0.1.0"

from .space import QuasiMetricSpace, build_space, gen_example

__all__ = ["QuasiMetricSpace", "build_space", "gen_example", "__version__"]
