"""Modulated two-mirror optomechanics: linearized Gaussian and master-equation solvers."""

from .model import SystemParams, build_diffusion_matrix, build_drift_matrix, modulation_factor
from .meanfield import MeanFieldState, effective_coupling, integrate_meanfield, steady_state
from .lindblad import FockConfig, DensityOperator

__version__ = "0.1.0"

__all__ = [
    "SystemParams", "build_drift_matrix", "build_diffusion_matrix", "modulation_factor",
    "MeanFieldState", "steady_state", "effective_coupling", "integrate_meanfield",
    "FockConfig", "DensityOperator",
]
