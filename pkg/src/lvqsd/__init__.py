"""Quasi-stationary distributions of two-type stochastic Lotka-Volterra diffusions.

Spectral (finite-difference eigenproblem) and Monte Carlo (paths and
Fleming-Viot particles) estimates of killing rates, QSDs and the long-time
conditioned behaviour, cross-checked against each other.
"""

__version__ = "0.1.0"

from .errors import LVQSDError, NumericalError, ValidationError  # noqa: E402
from .model import (  # noqa: E402
    AxisModel,
    DirichletHarness,
    KolmogorovModel,
    LVParams,
    Regime,
    load_model,
    validate_params,
)

__all__ = [
    "AxisModel", "DirichletHarness", "KolmogorovModel", "LVParams", "LVQSDError",
    "NumericalError", "Regime", "ValidationError", "load_model", "validate_params",
]
