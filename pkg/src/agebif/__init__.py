"""Bifurcation of positive equilibria in age-structured models with nonlinear diffusion."""

from .errors import (AgebifError, ConfigError, CorrectorError, ModelBallError, ModelError,
                     SelfConsistencyError, SimplicityError, SingularStepError, SolverError,
                     SpectralError)
from .grid import Boundary, BoundaryConditions, make_age_grid, make_space
from .model import Dependence, ModelSpec, State, build_preset, symmetrize
from .evolution import DensityField, Grid, duhamel, make_grid, propagate
from .spectral import (SpectralData, assemble_q, assemble_q0, kernel_simplicity_check,
                       normalize_birth, principal_pair)
from .bifurcation import (Branch, BranchPoint, Direction, EquilibriumSolver, Expansion,
                          classify_point, continue_branch, local_expansion, solve_equilibrium)

__version__ = "0.1.0"
