"""Provider-facing result types and the validated entry points the engine calls.

A scoring provider is any object with a ``provider_id`` string and two
methods::

    generate(prompt: str, max_new_tokens: int) -> GenerationResult
    score(prompt: str, response_tokens: Sequence) -> ScoreResult

The module-level :func:`generate` and :func:`score` check preconditions and
apply the log-probability floor, so every backend is treated identically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ..errors import InvalidInputError
from ..sensitivity import LOGPROB_FLOOR, clamp_logprobs


@dataclass(frozen=True)
class GenerationResult:
    tokens: tuple
    text: str
    token_logprobs: tuple[float, ...]
    clamped: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "token_logprobs", tuple(float(v) for v in self.token_logprobs))
        if len(self.tokens) != len(self.token_logprobs):
            raise InvalidInputError(
                f"{len(self.tokens)} tokens but {len(self.token_logprobs)} log-probabilities"
            )

    @property
    def length(self) -> int:
        return len(self.tokens)

    @property
    def total_logprob(self) -> float:
        return math.fsum(self.token_logprobs)

    def to_dict(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "text": self.text,
            "token_logprobs": list(self.token_logprobs),
            "clamped": self.clamped,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationResult":
        return cls(
            tokens=tuple(data["tokens"]),
            text=data["text"],
            token_logprobs=tuple(data["token_logprobs"]),
            clamped=int(data.get("clamped", 0)),
        )


@dataclass(frozen=True)
class ScoreResult:
    token_logprobs: tuple[float, ...]
    clamped: int = 0
    sum: float = field(init=False)

    def __post_init__(self):
        lps = tuple(float(v) for v in self.token_logprobs)
        object.__setattr__(self, "token_logprobs", lps)
        object.__setattr__(self, "sum", math.fsum(lps))

    def to_dict(self) -> dict:
        return {"token_logprobs": list(self.token_logprobs), "sum": self.sum, "clamped": self.clamped}

    @classmethod
    def from_dict(cls, data: dict) -> "ScoreResult":
        return cls(token_logprobs=tuple(data["token_logprobs"]), clamped=int(data.get("clamped", 0)))


@runtime_checkable
class ScoringProvider(Protocol):
    provider_id: str

    def generate(self, prompt: str, max_new_tokens: int) -> GenerationResult: ...

    def score(self, prompt: str, response_tokens: Sequence) -> ScoreResult: ...


@runtime_checkable
class Embedder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


def generate(provider: ScoringProvider, prompt: str, max_new_tokens: int, floor: float = LOGPROB_FLOOR) -> GenerationResult:
    """Greedy generation with floored per-token log-probabilities."""
    if max_new_tokens < 1:
        raise InvalidInputError("max_new_tokens must be >= 1")
    result = provider.generate(prompt, max_new_tokens)
    lps, clamped = clamp_logprobs(result.token_logprobs, floor)
    if clamped:
        return GenerationResult(result.tokens, result.text, tuple(lps), clamped=result.clamped + clamped)
    return result


def score(provider: ScoringProvider, prompt: str, response_tokens: Sequence, floor: float = LOGPROB_FLOOR) -> ScoreResult:
    """Teacher-forced log-probabilities of ``response_tokens`` after ``prompt``."""
    if len(response_tokens) == 0:
        raise InvalidInputError("response_tokens must be non-empty")
    result = provider.score(prompt, response_tokens)
    if len(result.token_logprobs) != len(response_tokens):
        raise InvalidInputError(
            f"provider returned {len(result.token_logprobs)} log-probabilities for {len(response_tokens)} tokens"
        )
    lps, clamped = clamp_logprobs(result.token_logprobs, floor)
    if clamped:
        return ScoreResult(tuple(lps), clamped=result.clamped + clamped)
    return result


def embed(embedder: Embedder, text: str) -> np.ndarray:
    if not text or not text.strip():
        raise InvalidInputError("cannot embed empty text")
    return np.asarray(embedder.embed(text), dtype=np.float64)
