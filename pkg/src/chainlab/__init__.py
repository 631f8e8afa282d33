"""chainlab: a numerical laboratory for Markov chain concentration bounds,
Gaussian complexities, and chaining constructions."""

from .bounds import (BoundReport, DEFAULT_CONSTANTS, UniversalConstants,
                     gamma1_analytic, gaussian_matrix_expectation,
                     main_expectation, main_tail, mcdiarmid_tail, naor_bounds,
                     nsw_tail, paulin_tail, sharp_expectation)
from .chaining import (AdmissibleSequence, WitnessProcess, build_witness_process,
                       gamma_upper, gaussian_sup_mc, greedy_admissible_sequence,
                       linf_two_stage_sequence, load_witness_process, metric,
                       save_witness_process)
from .chains import (ChainSpec, TransitionKernel, build_chain, load_kernel_matrix,
                     mixing_time, sample_trajectory, save_kernel_matrix,
                     spectral_lambda, stationary_distribution)
from .errors import NumericalError, ValidationError
from .experiments import (ExperimentConfig, ExperimentReport, parse_config,
                          run_experiment)
from .montecarlo import (McEstimate, TailCurve, estimate_L, estimate_chain_sum,
                         variance_statistics)
from .spaces import (NormedSpace, StepFunctions, center_and_normalize,
                     estimate_smoothness, load_functions, save_functions)

__version__ = "0.1.0"

__all__ = [
    "AdmissibleSequence", "BoundReport", "ChainSpec", "DEFAULT_CONSTANTS",
    "ExperimentConfig", "ExperimentReport", "McEstimate", "NormedSpace",
    "NumericalError", "StepFunctions", "TailCurve", "TransitionKernel",
    "UniversalConstants", "ValidationError", "WitnessProcess",
    "build_chain", "build_witness_process", "center_and_normalize",
    "estimate_L", "estimate_chain_sum", "estimate_smoothness",
    "gamma1_analytic", "gamma_upper", "gaussian_matrix_expectation",
    "gaussian_sup_mc", "greedy_admissible_sequence", "linf_two_stage_sequence",
    "load_functions", "load_kernel_matrix", "load_witness_process",
    "main_expectation", "main_tail", "mcdiarmid_tail", "metric", "mixing_time",
    "naor_bounds", "nsw_tail", "parse_config", "paulin_tail", "run_experiment",
    "sample_trajectory", "save_functions", "save_kernel_matrix",
    "save_witness_process", "sharp_expectation", "spectral_lambda",
    "stationary_distribution", "variance_statistics",
]
