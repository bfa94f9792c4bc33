"""Intensity healing of sparse diffraction patterns under an autocorrelation support."""

__version__ = "0.1.0"

from .estimators import COACSHealer, HIOERPhaser
from .exceptions import DegenerateStep, NumericFailure, UndefinedMetric
from .grid import (
    WindowPair,
    autocorr_support,
    centered_square,
    dft2,
    hann_window,
    taper_weights,
)
from .healing import HealConfig, HealResult, heal
from .metrics import RadialProfile, amplitudes, r_factor, radial_r_factor
from .objective import HealProblem, data_objective, rho_l, support_penalty
from .phasing import PhaseConfig, PhaseResult, phase_ensemble, phase_single
from .simulate import Particle, SimConfig, simulate_dataset

__all__ = [
    "COACSHealer",
    "DegenerateStep",
    "HIOERPhaser",
    "HealConfig",
    "HealProblem",
    "HealResult",
    "NumericFailure",
    "Particle",
    "PhaseConfig",
    "PhaseResult",
    "RadialProfile",
    "SimConfig",
    "UndefinedMetric",
    "WindowPair",
    "__version__",
    "amplitudes",
    "autocorr_support",
    "centered_square",
    "data_objective",
    "dft2",
    "hann_window",
    "heal",
    "phase_ensemble",
    "phase_single",
    "r_factor",
    "radial_r_factor",
    "rho_l",
    "simulate_dataset",
    "support_penalty",
    "taper_weights",
]
