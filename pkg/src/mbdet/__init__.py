"""Muttalib-Borodin determinants with Fisher-Hartwig singularities.

Equilibrium data, large-n constants, an arbitrary-precision determinant
oracle, expansion fits and a Metropolis sampler for the point process.
"""
from .ensemble import EnsembleSpec, FHSingularity, Side, validate_spec, weight_eval
from .errors import MBError, NumericalError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "EnsembleSpec", "FHSingularity", "Side", "validate_spec", "weight_eval",
    "MBError", "NumericalError", "ValidationError", "__version__",
]
