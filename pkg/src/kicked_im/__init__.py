"""Temporal entanglement of influence matrices in the kicked Ising chain."""

__version__ = "0.1.0"

from .errors import (
    CriticalPointError,
    KickedIMError,
    NumericalError,
    TruncationBreakdown,
    ValidationError,
)
from .model import ModelParams

__all__ = [
    "__version__",
    "CriticalPointError",
    "KickedIMError",
    "ModelParams",
    "NumericalError",
    "TruncationBreakdown",
    "ValidationError",
]
