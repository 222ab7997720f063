"""Finite differences for tr(A D^2 u) = f on squares and discs."""

from .grid import DISC, SQUARE, Grid2D, GridFunction
from .krylov import SolverConfig, SolveStats, solve_linear
from .solve import (BoundaryFlux, FluxOperator, boundary_flux, empirical_cz_constant,
                    flux_operator, random_rhs, solve_dirichlet)
from .stencil import StencilOperator, assemble

__all__ = [
    "DISC", "SQUARE", "Grid2D", "GridFunction", "SolverConfig", "SolveStats", "solve_linear",
    "BoundaryFlux", "FluxOperator", "boundary_flux", "empirical_cz_constant", "flux_operator",
    "random_rhs", "solve_dirichlet", "StencilOperator", "assemble",
]
