"""Steering and minimum-energy control of Caputo fractional neutral evolution equations."""

__version__ = "0.1.0"

from .evolution import (
    ControlSignal,
    NeutralMap,
    SteeringProblem,
    Trajectory,
    caputo_residual,
    mild_solve,
)
from .exceptions import (
    ConvergenceError,
    FracSteerError,
    PicardConvergenceError,
    ValidationError,
)
from .mittag_leffler import ml, ml_eval
from .optimal_control import CostWeights, solve_min_energy
from .spectral import GridSpec, SpectralOperator, SpectralState, make_dirichlet_laplacian
from .steering import (
    assemble_steering_matrix,
    certificate_constants,
    contraction_certificate,
    picard_iterate,
)

__all__ = [
    "ControlSignal",
    "ConvergenceError",
    "CostWeights",
    "FracSteerError",
    "GridSpec",
    "NeutralMap",
    "PicardConvergenceError",
    "SpectralOperator",
    "SpectralState",
    "SteeringProblem",
    "Trajectory",
    "ValidationError",
    "__version__",
    "assemble_steering_matrix",
    "caputo_residual",
    "certificate_constants",
    "contraction_certificate",
    "make_dirichlet_laplacian",
    "mild_solve",
    "ml",
    "ml_eval",
    "picard_iterate",
    "solve_min_energy",
]
