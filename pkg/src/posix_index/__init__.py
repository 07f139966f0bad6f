"""Prompt sensitivity index (POSIX) for language models.

Generates intent-aligned prompt variants, collects generation and
cross-scoring log-likelihoods from a pluggable backend, and computes the
per-set sensitivity psi, the dataset-level POSIX and four diagnostic factors.
"""

__version__ = "0.1.0"

from .errors import PosixError  # noqa: E402
from .sensitivity import (  # noqa: E402
    AggregateStats,
    LogLikelihoodMatrix,
    PosixResult,
    SensitivityScore,
    aggregate,
    compute_posix,
    compute_psi,
)

__all__ = [
    "AggregateStats",
    "LogLikelihoodMatrix",
    "PosixError",
    "PosixResult",
    "SensitivityScore",
    "aggregate",
    "compute_posix",
    "compute_psi",
]
