"""Simulated quantum Gram-Schmidt sampling and classical read-out of row-space states."""
from .errors import (DegenerateBasisError, DegenerateInputError, InconsistentEstimatesError,
                     NoSolutionComponentError, ParameterError, PostSelectionError,
                     PreconditionError, RankExhaustedError, ReadoutError)
from .matrix import (GramBasis, LowRankMatrix, QramTree, basis_from_indices, build_qram,
                     generate_low_rank, gram_matrix, gs_coefficients, load_matrix_csv,
                     save_matrix_csv, sigma_min)
from .simulator import ShotLedger, StateVector, lcu_prepare_t, prepare_pair_superposition
from .qgsp import QgspConfig, QgspTrace, repeat_until_good, run_qgsp
from .readout import ReadoutConfig, ReadoutResult, readout_coordinates, swap_test
from .config import ExperimentConfig, load_config

__version__ = "0.1.0"
