"""Normalized radial solutions of a p-Laplacian equation with mixed powers.

The package discretizes radial profiles on a graded grid, finds
mountain-pass critical points on a fixed ``L^s`` mass sphere, and certifies
them with Pohozaev, residual and Moser-iteration checks against an
independent ODE shooting oracle.
"""

from .certify import SolveReport, build_report, moser_bound, shoot_oracle
from .dual_solver import DualDatum, solve_dual
from .functionals import energy_J, lagrange_multiplier, pohozaev_P, terms
from .mp_solver import SolverOptions, mass_sweep, solve, solve_ground_state
from .potentials import PotentialSpec, check_V1, make_potential
from .radial_core import (
    AdmissibilityError,
    GridError,
    Params,
    RadialFunction,
    RadialGrid,
    build_grid,
    project_sphere,
    rescale,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError",
    "DualDatum",
    "GridError",
    "Params",
    "PotentialSpec",
    "RadialFunction",
    "RadialGrid",
    "SolveReport",
    "SolverOptions",
    "build_grid",
    "build_report",
    "check_V1",
    "energy_J",
    "lagrange_multiplier",
    "make_potential",
    "mass_sweep",
    "moser_bound",
    "pohozaev_P",
    "project_sphere",
    "rescale",
    "shoot_oracle",
    "solve",
    "solve_dual",
    "solve_ground_state",
    "terms",
]
