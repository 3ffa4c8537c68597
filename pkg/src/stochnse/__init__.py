"""Spectral simulation of the 2D stochastic Navier-Stokes equations and viscosity estimation."""

__version__ = "0.1.0"

from .basis import (StokesBasis, TorusSpec, apply_fractional_power, basis_for_grid, build_basis,
                    eval_eigenfunction, project, project_complement)
from .errors import (BlowUp, ConfigError, DegenerateDenominator, ExponentOutOfRange, IoError,
                     StochNSEError, UnresolvedMode)
from .estimators import (EstimatorConfig, EstimatorResult, estimate, estimate_check, estimate_hat,
                         estimate_tilde, kappa, theoretical_variance)
from .linear import (OuParams, linear_energy_growth, ou_exact_step, ou_time_integral_moments,
                     simulate_linear)
from .noise import NoiseSpec, color, increment_path, sample_increments
from .solver import SolverConfig, nonlinear_term, simulate, sobolev_norm, step_spde
from .trajectory import Trajectory

__all__ = [
    "BlowUp", "ConfigError", "DegenerateDenominator", "EstimatorConfig", "EstimatorResult",
    "ExponentOutOfRange", "IoError", "NoiseSpec", "OuParams", "SolverConfig", "StochNSEError",
    "StokesBasis", "TorusSpec", "Trajectory", "UnresolvedMode", "apply_fractional_power",
    "basis_for_grid", "build_basis", "color", "estimate", "estimate_check", "estimate_hat",
    "estimate_tilde", "eval_eigenfunction", "increment_path", "kappa", "linear_energy_growth",
    "nonlinear_term", "ou_exact_step", "ou_time_integral_moments", "project", "project_complement",
    "sample_increments", "simulate", "simulate_linear", "sobolev_norm", "step_spde",
    "theoretical_variance",
]
