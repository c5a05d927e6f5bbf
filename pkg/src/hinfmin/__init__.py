"""H-infinity norm minimization of large parameter-dependent descriptor systems
by greedy interpolatory subspace frameworks."""

__version__ = "0.1.0"

from .errors import (ConfigError, EigFailure, HinfminError, IrregularPencil,
                     MatrixMarketError, MaxIterExceeded, NonSimple, SingularPencil)
from .model import (AffineMatrixFamily, Blackbox, Constant, Coordinate, DescriptorLTI,
                    Monomial, ParameterBox, ParametricDescriptorSystem, SigmaEvaluation,
                    assemble_matrices, eval_transfer, sigma_eval, transfer_partial)
from .projection import (ReducedSystem, SubspacePair, check_reduced_regularity,
                         expansion_directions, extend_subspace, project)
from .norms import (LevelSetOptions, NormResult, build_level_set_pencil, imaginary_eigenvalues,
                    linf_norm_dense, linf_norm_large, linf_norm_sweep)
from .optimize import (ObjectiveProbe, OptimizerOptions, minimize_reduced_hinf,
                       projected_quasi_newton, support_minimize_1d)
from .driver import (IterationRecord, MinimizationResult, TerminationCriteria,
                     convergence_diagnostics, hinf_minimize, hinf_minimize_basic,
                     hinf_minimize_extended, initialize_subspaces, termination_check,
                     verify_interpolation)
from .problems import (ProblemSpec, SyntheticSpec, load_matrix_market, load_problem_config,
                       load_result, save_result, synthetic_build, synthetic_oracle_transfer,
                       write_matrix_market)
