"""Deterministic reference bigram language model used as an offline backend."""
from __future__ import annotations

import hashlib
import json
import string
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError, InvalidInputError
from .base import GenerationResult, ScoreResult

DEFAULT_END_TOKEN = "</s>"


def normalize_word(word: str) -> str:
    return word.strip(string.punctuation)


class ReferenceBigramLM:
    """Bigram LM with additive smoothing and a temperature.

    Row ``c`` of the effective table is ``softmax(log p_c / temperature)``
    with ``p_c[k] = (count[c][k] + alpha) / (sum_k count[c][k] + alpha * V)``.

    Prompts condition the model through a single token: the last
    whitespace-delimited word of the prompt that, after stripping leading and
    trailing punctuation, is in the vocabulary (case-sensitive). Prompts without one
    fall back to the first vocabulary entry. Responses are sequences of
    vocabulary indices; the end marker stops generation and is not emitted.
    """

    def __init__(
        self,
        vocabulary: Sequence[str],
        counts,
        alpha: float = 1.0,
        temperature: float = 1.0,
        end_token: str = DEFAULT_END_TOKEN,
    ):
        vocabulary = list(vocabulary)
        if len(set(vocabulary)) != len(vocabulary) or not vocabulary:
            raise ConfigError("vocabulary must be non-empty and free of duplicates")
        if end_token not in vocabulary:
            raise ConfigError(f"end token {end_token!r} missing from vocabulary")
        if temperature <= 0:
            raise ConfigError("temperature must be positive")
        if alpha < 0:
            raise ConfigError("alpha must be non-negative")
        self.vocabulary = tuple(vocabulary)
        self.end_token = end_token
        self.end_id = vocabulary.index(end_token)
        self.alpha = float(alpha)
        self.temperature = float(temperature)
        self.index = {w: i for i, w in enumerate(vocabulary)}
        self.counts = self._counts_matrix(counts)

        v = len(vocabulary)
        totals = self.counts.sum(axis=1, keepdims=True) + self.alpha * v
        if np.any(totals <= 0):
            raise ConfigError("a bigram row has no mass; use alpha > 0 or add counts")
        with np.errstate(divide="ignore"):
            base = np.log((self.counts + self.alpha) / totals)
        scaled = base / self.temperature
        row_max = scaled.max(axis=1, keepdims=True)
        log_norm = row_max + np.log(np.exp(scaled - row_max).sum(axis=1, keepdims=True))
        self.log_table = scaled - log_norm
        self.log_table.setflags(write=False)

        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        self.provider_id = "reference-bigram:" + hashlib.sha256(payload).hexdigest()[:16]

    def _counts_matrix(self, counts) -> np.ndarray:
        v = len(self.vocabulary)
        if isinstance(counts, Mapping):
            mat = np.zeros((v, v))
            for prev, row in counts.items():
                for nxt, c in row.items():
                    if prev not in self.index or nxt not in self.index:
                        raise ConfigError(f"count for unknown bigram ({prev!r}, {nxt!r})")
                    mat[self.index[prev], self.index[nxt]] = float(c)
        else:
            mat = np.array(counts, dtype=np.float64)
            if mat.shape != (v, v):
                raise ConfigError(f"counts must be {v}x{v}, got {mat.shape}")
        if np.any(mat < 0):
            raise ConfigError("bigram counts must be non-negative")
        return mat

    @property
    def table(self) -> np.ndarray:
        """Effective probability table (rows sum to 1)."""
        return np.exp(self.log_table)

    def context(self, prompt: str) -> int:
        for word in reversed(prompt.split()):
            idx = self.index.get(normalize_word(word))
            if idx is not None:
                return idx
        return 0

    def encode(self, text: str) -> list[int]:
        """Map a detokenized response back to token ids."""
        try:
            return [self.index[w] for w in text.split()]
        except KeyError as exc:
            raise InvalidInputError(f"out-of-vocabulary token {exc.args[0]!r}") from None

    def decode(self, tokens: Sequence[int]) -> str:
        return " ".join(self.vocabulary[t] for t in tokens)

    def generate(self, prompt: str, max_new_tokens: int) -> GenerationResult:
        if max_new_tokens < 1:
            raise InvalidInputError("max_new_tokens must be >= 1")
        prev = self.context(prompt)
        tokens, lps = [], []
        for _ in range(max_new_tokens):
            row = self.log_table[prev]
            nxt = int(np.argmax(row))  # first maximum: lowest index wins ties
            if nxt == self.end_id:
                break
            tokens.append(nxt)
            lps.append(float(row[nxt]))
            prev = nxt
        return GenerationResult(tuple(tokens), self.decode(tokens), tuple(lps))

    def score(self, prompt: str, response_tokens: Sequence[int]) -> ScoreResult:
        if len(response_tokens) == 0:
            raise InvalidInputError("response_tokens must be non-empty")
        prev = self.context(prompt)
        lps = []
        for tok in response_tokens:
            tok = int(tok)
            if not 0 <= tok < len(self.vocabulary):
                raise InvalidInputError(f"token id {tok} outside vocabulary")
            lps.append(float(self.log_table[prev, tok]))
            prev = tok
        return ScoreResult(tuple(lps))

    def with_temperature(self, temperature: float) -> "ReferenceBigramLM":
        return ReferenceBigramLM(self.vocabulary, self.counts, self.alpha, temperature, self.end_token)

    def to_dict(self) -> dict:
        counts = {}
        for i, prev in enumerate(self.vocabulary):
            row = {self.vocabulary[j]: float(c) for j, c in enumerate(self.counts[i]) if c}
            if row:
                counts[prev] = row
        return {
            "vocabulary": list(self.vocabulary),
            "end_token": self.end_token,
            "counts": counts,
            "alpha": self.alpha,
            "temperature": self.temperature,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReferenceBigramLM":
        try:
            return cls(
                vocabulary=data["vocabulary"],
                counts=data["counts"],
                alpha=data.get("alpha", 1.0),
                temperature=data.get("temperature", 1.0),
                end_token=data.get("end_token", DEFAULT_END_TOKEN),
            )
        except KeyError as exc:
            raise ConfigError(f"reference LM definition missing field {exc.args[0]!r}") from None

    @classmethod
    def from_file(cls, path: str | Path) -> "ReferenceBigramLM":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True), encoding="utf-8")

    @classmethod
    def random(
        cls,
        words: Sequence[str],
        seed: int,
        alpha: float = 0.5,
        temperature: float = 1.0,
        max_count: int = 20,
        end_token: str = DEFAULT_END_TOKEN,
    ) -> "ReferenceBigramLM":
        vocab = [*words, end_token]
        rng = np.random.default_rng(seed)
        counts = rng.integers(0, max_count + 1, size=(len(vocab), len(vocab)))
        return cls(vocab, counts, alpha=alpha, temperature=temperature, end_token=end_token)

    def __repr__(self) -> str:
        return f"ReferenceBigramLM(V={len(self.vocabulary)}, alpha={self.alpha}, T={self.temperature})"
