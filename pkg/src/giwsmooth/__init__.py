"""Filtering and smoothing for the Gaussian inverse-Wishart extended object
model, in conditional and factorized form."""

from . import conditional, distributions, evaluation, factorized, models, simulation
from ._linalg import DofError, GIWError, NotPositiveDefiniteError
from .evaluation import expected_state, gwd
from .simulation import ScenarioConfig, run_monte_carlo

__version__ = "0.1.0"

__all__ = [
    "conditional",
    "distributions",
    "evaluation",
    "factorized",
    "models",
    "simulation",
    "DofError",
    "GIWError",
    "NotPositiveDefiniteError",
    "expected_state",
    "gwd",
    "ScenarioConfig",
    "run_monte_carlo",
]
