"""Prototype-form classifier, regularized GBDTs and a three-way hard vote
for imbalanced tabular data, plus a Monte-Carlo lab for the accompanying
robustness bounds."""

__version__ = "0.1.0"

from .errors import (
    AlignmentError,
    ConfigurationError,
    DegenerateError,
    DomainError,
    EmptyResultError,
    InfeasibleError,
    LeakageError,
    MissingClassError,
    ParseError,
    ProtovoteError,
)

__all__ = [
    "__version__",
    "AlignmentError",
    "ConfigurationError",
    "DegenerateError",
    "DomainError",
    "EmptyResultError",
    "InfeasibleError",
    "LeakageError",
    "MissingClassError",
    "ParseError",
    "ProtovoteError",
]
