"""Pluggable backends: generation, teacher-forced scoring, embeddings, paraphrases."""
from .base import (
    Embedder,
    GenerationResult,
    ScoreResult,
    ScoringProvider,
    embed,
    generate,
    score,
)
from .bigram import ReferenceBigramLM
from .embedding import HashedTrigramEmbedder, cosine
from .http import (
    ChatParaphraser,
    EchoCompletionsProvider,
    HTTPEmbedder,
    NativeScoringProvider,
    resolve_api_key,
)
from .oracle import brute_force_sequence_prob, enumerate_continuations, greedy_by_enumeration

__all__ = [
    "ChatParaphraser",
    "EchoCompletionsProvider",
    "Embedder",
    "GenerationResult",
    "HTTPEmbedder",
    "HashedTrigramEmbedder",
    "NativeScoringProvider",
    "ReferenceBigramLM",
    "ScoreResult",
    "ScoringProvider",
    "brute_force_sequence_prob",
    "cosine",
    "embed",
    "enumerate_continuations",
    "generate",
    "greedy_by_enumeration",
    "resolve_api_key",
    "score",
]
