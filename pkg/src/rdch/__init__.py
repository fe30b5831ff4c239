"""Finite element simulator for the relaxed degenerate Cahn-Hilliard
equation with a single-well logarithmic potential."""

from .fem import FemSpace
from .mesh import build_interval_mesh, build_structured_triangle_mesh, compute_quality
from .physics import ModelParams
from .solvers import SolverConfig, State, run

__all__ = [
    "FemSpace",
    "ModelParams",
    "SolverConfig",
    "State",
    "build_interval_mesh",
    "build_structured_triangle_mesh",
    "compute_quality",
    "run",
]

__version__ = "0.1.0"
