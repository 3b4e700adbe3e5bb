"""Weak-form system identification: sparse model discovery and GLS parameter estimation."""

from weakid.grid import Dataset, Grid, NoiseSpec, add_noise, make_grid
from weakid.library import FeatureLibrary, Term, ode_poly_trig_library, pde_poly_library

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FeatureLibrary",
    "Grid",
    "NoiseSpec",
    "Term",
    "add_noise",
    "make_grid",
    "ode_poly_trig_library",
    "pde_poly_library",
]
