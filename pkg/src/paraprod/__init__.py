"""Parametrized paraproducts, their trilinear forms and time-frequency tiles on a periodic grid."""
from .grid import Grid, MeasurableSet, Signal, dft_forward, dft_inverse, lp_norm, random_set, sample_X_of
from .windows import ParamSet, Window, admissible_j_range, make_bump, scale_indices, symbol_of, window_of

__version__ = "0.1.0"

__all__ = [
    "Grid", "Signal", "MeasurableSet", "dft_forward", "dft_inverse", "lp_norm", "random_set", "sample_X_of",
    "ParamSet", "Window", "make_bump", "window_of", "symbol_of", "admissible_j_range", "scale_indices",
]
