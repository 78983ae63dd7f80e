"""Simulation and drift/Hurst inference for diagonalizable SPDEs with fBM noise."""

__version__ = "0.1.0"

from .errors import FracSpdeError, IdentifiabilityError, NumericalError, ValidationError
from .specmodel import SpectralModel, builtin_model, load_model, validate_parabolicity
from .fbm import TimeGrid, sample_fbm
from .solution import simulate_modes, log_paths
from .mkernel import kernel_constants, transform_path
from .mle import EstimateReport, mle_geometric, mle_mode
from .accel import EstimateSequence, aitken, weighted_average
from .exact import exact_hurst, exact_joint, exact_theta, pair_feasibility

__all__ = [
    "__version__",
    "FracSpdeError",
    "IdentifiabilityError",
    "NumericalError",
    "ValidationError",
    "SpectralModel",
    "builtin_model",
    "load_model",
    "validate_parabolicity",
    "TimeGrid",
    "sample_fbm",
    "simulate_modes",
    "log_paths",
    "kernel_constants",
    "transform_path",
    "EstimateReport",
    "mle_geometric",
    "mle_mode",
    "EstimateSequence",
    "aitken",
    "weighted_average",
    "exact_hurst",
    "exact_joint",
    "exact_theta",
    "pair_feasibility",
]
