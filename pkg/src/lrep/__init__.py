"""Matrix-free solver for the linear response eigenvalue problem."""
from .biorth import BiorthBasis, biorth_against, biorth_residual, cgs_biorth, mgs_biorth
from .errors import (ContractViolation, DegenerateSpectrum, IngestionError,
                     InitializationFailure, InvalidNullspace, LrepError, NotEnoughSamples,
                     NullspaceLeak, RankMismatch)
from .linalg import InnerProduct, LinearOperator, cg_solve
from .nullspace import GeneralizedNullspace, analytic_nullspace_T, compute_nullspace
from .problems import (BenchmarkProblem, build_problem, make_fd_laplacian_problem,
                       make_generalized_problem, make_random_spd_problem, make_T_problem)
from .projected import ProjectedLrep, assemble_projected, dense_lrep_oracle, solve_small_lrep
from .solver import BospConfig, EigenResult, regression_coefficients, solve

__version__ = "0.1.0"
