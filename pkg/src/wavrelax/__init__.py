"""Multi-stage and multisplitting waveform relaxation for linear DAEs."""

from .errors import (ConfigError, ConvergenceError, DimensionError,
                     SingularMatrixError, ValidationError)
from .linalg import BandFactorization, factorize, solve, spectral_radius_estimate
from .multisplit import (GS_DECOUPLED, GS_SERIAL, JACOBI, MixingGuardState,
                         MSKind, MSMethod, gs_coupled, mixing_guard_check,
                         ms_iteration_operator, ms_run)
from .problem import (LinearDAE, ManufacturedCase, analytic_derivative,
                      analytic_solution, build_paper_problem, manufactured_rhs)
from .splittings import (PartitionOfUnity, StageSplittings, SubproblemSplitting,
                         build_partition, build_stage_splittings,
                         build_subproblem_splittings, validate_partition,
                         validate_stage, validate_subproblems)
from .stages import (ErrorBound, FixedIters, SolveTrace, StageDepth, TimeLoopMode,
                     Trajectory, direct_euler, iteration_operator, wr_run)
from .structured import StructuredMatrix, combine, matvec, matvec_rows

__version__ = "0.1.0"
