"""Randomized benchmarking of SU(2) gates on a single spin-j system."""

from .wigner import HalfInt, DomainError, clebsch_gordan, wigner_6j, wigner_small_d, wigner_big_D, character
from .spinrep import GroupElement, rotation_matrix, spherical_tensor, haar_sample
from .superop import Superoperator, m_matrix, f_matrix, exact_quality_params, average_fidelity
from .noise import NoiseModel, SpamModel, gate_error_channel
from .protocols import ExperimentPlan, estimate, build_finite_frame, allocate_shots
from .analysis import fit_exponential, analyze, zero_noise_variance, qubit_frame_complexity

__version__ = "0.1.0"
