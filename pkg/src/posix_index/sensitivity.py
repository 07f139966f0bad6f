"""Per-set sensitivity (psi), the dataset-level index (POSIX) and summary statistics.

Everything here is pure and backend-free. Log-likelihoods are natural-log
values; psi is reported in nats per token.

    psi = 1/(N(N-1)) * sum_i sum_j |S[i][j] - S[j][j]| / L[j]

where ``S[i][j] = log P(y_j | x_i)`` and ``L[j]`` is the token count of
response ``y_j``. Diagonal terms vanish identically and are summed like any
other cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidMatrixError, NoDataError, SetTooSmallError

LOGPROB_FLOOR = -100.0


@dataclass(frozen=True)
class LogLikelihoodMatrix:
    """Square matrix of summed log-probabilities plus response lengths.

    ``entries[i][j]`` is ``log P(y_j | x_i)``; ``lengths[j]`` is the token
    count of ``y_j`` under the scoring provider's tokenizer.
    ``clamped_cells`` counts cells that contained at least one token
    log-probability raised to the floor.
    """

    entries: np.ndarray
    lengths: tuple[int, ...]
    clamped_cells: int = 0

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidMatrixError(f"entries must be square, got shape {entries.shape}")
        lengths = tuple(int(v) for v in self.lengths)
        if len(lengths) != entries.shape[0]:
            raise InvalidMatrixError(
                f"{len(lengths)} lengths for a {entries.shape[0]}x{entries.shape[0]} matrix"
            )
        if any(v < 1 for v in lengths):
            raise InvalidMatrixError("every response length must be >= 1")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "lengths", lengths)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "entries": self.entries.tolist(),
            "lengths": list(self.lengths),
            "clamped_cells": self.clamped_cells,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LogLikelihoodMatrix":
        return cls(
            entries=np.asarray(data["entries"], dtype=np.float64),
            lengths=tuple(data["lengths"]),
            clamped_cells=int(data.get("clamped_cells", 0)),
        )


@dataclass(frozen=True)
class SensitivityScore:
    psi: float
    n: int
    degenerate: bool = False
    set_id: str | None = None


@dataclass(frozen=True)
class PosixResult:
    posix: float
    per_set: tuple[SensitivityScore, ...]
    m: int

    @property
    def excluded(self) -> int:
        return len(self.per_set) - self.m


@dataclass(frozen=True)
class AggregateStats:
    mean: float
    std: float
    quartiles: tuple[float, float, float, float, float] = field(default=(0.0,) * 5)

    @property
    def minimum(self) -> float:
        return self.quartiles[0]

    @property
    def median(self) -> float:
        return self.quartiles[2]

    @property
    def maximum(self) -> float:
        return self.quartiles[4]


def clamp_logprobs(token_logprobs: Sequence[float], floor: float = LOGPROB_FLOOR) -> tuple[list[float], int]:
    """Raise every log-probability below ``floor`` (including -inf and NaN) to ``floor``.

    Returns the clamped list and how many values were changed.
    """
    out = []
    clamped = 0
    for lp in token_logprobs:
        lp = float(lp)
        if math.isnan(lp) or lp < floor:
            out.append(floor)
            clamped += 1
        else:
            out.append(lp)
    return out, clamped


def compute_psi(matrix: LogLikelihoodMatrix, set_id: str | None = None) -> SensitivityScore:
    n = matrix.n
    if n < 2:
        raise SetTooSmallError(f"psi needs at least 2 prompts, got {n}")
    entries = matrix.entries
    if not np.all(np.isfinite(entries)):
        raise InvalidMatrixError("matrix contains non-finite entries")

    # fsum over a fixed row-major term order: the result is correctly rounded,
    # so it does not depend on how the cells were filled
    diag = [float(entries[j, j]) for j in range(n)]
    terms = []
    for i in range(n):
        row = entries[i]
        for j in range(n):
            terms.append(abs(float(row[j]) - diag[j]) / matrix.lengths[j])
    psi = math.fsum(terms) / (n * (n - 1))
    return SensitivityScore(psi=psi, n=n, degenerate=False, set_id=set_id)


def compute_posix(scores: Sequence[SensitivityScore]) -> PosixResult:
    """Mean psi over the non-degenerate sets."""
    included = [s.psi for s in scores if not s.degenerate]
    if not included:
        raise NoDataError("no non-degenerate prompt sets to average")
    return PosixResult(posix=math.fsum(included) / len(included), per_set=tuple(scores), m=len(included))


def aggregate(values: Sequence[float]) -> AggregateStats:
    """Mean, population std and inclusive linear-interpolation quartiles."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise NoDataError("cannot aggregate an empty list")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrixError("aggregate values must be finite")
    qs = np.percentile(arr, [0, 25, 50, 75, 100], method="linear")
    return AggregateStats(
        mean=float(np.mean(arr)),
        std=float(np.std(arr, ddof=0)),
        quartiles=tuple(float(q) for q in qs),
    )
