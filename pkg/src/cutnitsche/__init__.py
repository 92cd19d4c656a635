"""Unfitted non-symmetric Nitsche finite elements for elliptic interface problems."""

from .cases import ManufacturedCase, case_linear_patch, case_radial, case_trig_jump
from .error_analysis import ConvergenceTable, energy_error, eoc, l2_error
from .fe_space import FESpace, build_space, eval_basis, evaluate_fe_function
from .forms import (LinearSystem, NitscheWeights, ProblemData, assemble_adjoint_penalized,
                    assemble_adjoint_penalty_free, assemble_penalized, assemble_penalty_free,
                    compute_weights, ghost_penalty_matrix)
from .geometry import (CircleLevelSet, CutQuadrature, FunctionLevelSet, LineLevelSet, classify_cells,
                       cut_quadrature, interface_quadrature, volume_quadrature)
from .mesh import Box, Mesh, build_structured_mesh, face_neighbors
from .solver import SolveReport, estimate_condition, solve

__version__ = "0.1.0"
