"""Fractional evolution equations driven by Mittag-Leffler kernels.

Forward and backward problems for ``D_t^alpha u + A^beta u = f(t, u)`` with a
positive self-adjoint operator ``A`` truncated to its first N eigenpairs.
"""

from .errors import (
    AmplificationOverflowError,
    BlowUpSuspected,
    CertificateUnavailable,
    ConfigError,
    ConstraintViolation,
    ContractionBudgetError,
    DivergingIteration,
    DomainError,
    FracSolveError,
    InsufficientData,
    IterationFailure,
    NumericalInstabilityError,
    UnsupportedRangeError,
)
from .ffvp import WeightedSpace, compute_constants, solve_ffvp, upper_bound_certificate
from .fivp import PicardPolicy, SourceSpec, Trajectory, continue_maximal, solve_fivp
from .kernels import Orders, OrdersDomain, TimeGrid, propagate
from .mlf import ml, ml_array
from .spectrum import SpectralOperator

__version__ = "0.1.0"

__all__ = [
    "AmplificationOverflowError",
    "BlowUpSuspected",
    "CertificateUnavailable",
    "ConfigError",
    "ConstraintViolation",
    "ContractionBudgetError",
    "DivergingIteration",
    "DomainError",
    "FracSolveError",
    "InsufficientData",
    "IterationFailure",
    "NumericalInstabilityError",
    "UnsupportedRangeError",
    "WeightedSpace",
    "compute_constants",
    "solve_ffvp",
    "upper_bound_certificate",
    "PicardPolicy",
    "SourceSpec",
    "Trajectory",
    "continue_maximal",
    "solve_fivp",
    "Orders",
    "OrdersDomain",
    "TimeGrid",
    "propagate",
    "ml",
    "ml_array",
    "SpectralOperator",
]
