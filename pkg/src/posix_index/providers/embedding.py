from __future__ import annotations

import hashlib

import numpy as np

from ..errors import InvalidInputError

DEFAULT_BUCKETS = 4096


class HashedTrigramEmbedder:
    """Offline embedder: term frequencies of character trigrams, hashed into buckets.

    Text is lower-cased; strings shorter than three characters contribute
    themselves as a single gram. Bucket = blake2b-64 digest of the UTF-8
    gram modulo ``buckets``, so vectors are stable across processes.
    """

    provider_id = "hashed-trigram"

    def __init__(self, buckets: int = DEFAULT_BUCKETS):
        if buckets < 1:
            raise InvalidInputError("buckets must be >= 1")
        self.buckets = buckets
        self.provider_id = f"hashed-trigram:{buckets}"

    def _bucket(self, gram: str) -> int:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.buckets

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise InvalidInputError("cannot embed empty text")
        text = text.lower()
        grams = [text[i:i + 3] for i in range(len(text) - 2)] or [text]
        vec = np.zeros(self.buckets)
        for g in grams:
            vec[self._bucket(g)] += 1.0
        return vec


def cosine(u: np.ndarray, v: np.ndarray) -> float | None:
    """Cosine similarity, or ``None`` when either vector has zero norm."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return None
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
