"""Numerical lab for saddle-shaped solutions of -Delta u = f(u) in R^(2m), reduced to (s, t)."""

from .geometry import DimensionParams, b_range
from .grid import DEFAULT_H, DEFAULT_S, QuadrantGrid, ScalarField, make_grid
from .linearized import LinearizedOperator, certify_supersolution, min_eigenvalue
from .nonlinearity import BistableNonlinearity, allen_cahn, by_name
from .profile1d import build_profile
from .solver import SaddleSolution, SolverConfig, load_solution, solve

__all__ = [
    "BistableNonlinearity", "DEFAULT_H", "DEFAULT_S", "DimensionParams", "LinearizedOperator",
    "QuadrantGrid", "SaddleSolution", "ScalarField", "SolverConfig", "allen_cahn", "b_range",
    "build_profile", "by_name", "certify_supersolution", "load_solution", "make_grid",
    "min_eigenvalue", "solve",
]
__version__ = "0.1.0"
