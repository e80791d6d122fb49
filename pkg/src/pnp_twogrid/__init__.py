"""Finite elements for the steady Poisson-Nernst-Planck system with Gummel
iteration and two-grid decoupling on structured tetrahedral meshes."""

from .fem import FeFunction, PnpCoefficients
from .manufactured import exact_solution
from .mesh import Mesh, build_cube_mesh, locate_point
from .solvers import (GummelConfig, PnpState, RhsBundle, RunMetrics, gummel_solve,
                      two_grid_I, two_grid_II, two_grid_III, verify_theorem_bounds)

__all__ = [
    "FeFunction", "GummelConfig", "Mesh", "PnpCoefficients", "PnpState", "RhsBundle",
    "RunMetrics", "build_cube_mesh", "exact_solution", "gummel_solve", "locate_point",
    "two_grid_I", "two_grid_II", "two_grid_III", "verify_theorem_bounds",
]
