"""The four sensitivity factors and the binned / rank-correlation views of them.

Factors, per prompt set:

* diversity            number of distinct responses
* entropy              Shannon entropy (nats) of response frequencies
* coherence            mean pairwise cosine similarity of response embeddings
* confidence variance  variance across prompts of the length-normalized
                       log-likelihood of the modal response
"""
from __future__ import annotations

import itertools
import math
import warnings
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidInputError, NoDataError, UndefinedCorrelationError
from .providers.base import Embedder, embed
from .providers.embedding import cosine
from .sensitivity import LogLikelihoodMatrix


class ZeroNormEmbeddingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FactorReport:
    diversity: int
    entropy: float
    coherence: float
    confidence_variance: float
    # same quantity without dividing by the response length
    confidence_variance_raw: float
    # True when every response is identical: the subset the original
    # variance-in-confidence analysis is restricted to
    all_identical: bool
    zero_norm_embeddings: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def normalize_response(text: str) -> str:
    return text.rstrip()


def _classes(responses: Sequence[str]) -> Counter:
    if len(responses) == 0:
        raise NoDataError("no responses")
    return Counter(normalize_response(r) for r in responses)


def response_diversity(responses: Sequence[str]) -> int:
    return len(_classes(responses))


def response_entropy(responses: Sequence[str]) -> float:
    counts = _classes(responses)
    n = sum(counts.values())
    h = -math.fsum((c / n) * math.log(c / n) for c in counts.values())
    return max(h, 0.0)


def _coherence(responses: Sequence[str], embedder: Embedder) -> tuple[float, bool]:
    if len(responses) == 0:
        raise NoDataError("no responses")
    if len(responses) == 1:
        return 1.0, False
    vectors = []
    zero_norm = False
    for r in responses:
        if not r.strip():
            vectors.append(None)
            zero_norm = True
        else:
            vectors.append(embed(embedder, r))
    sims = []
    for u, v in itertools.combinations(vectors, 2):
        c = None if u is None or v is None else cosine(u, v)
        if c is None:
            zero_norm = True
            c = 0.0
        sims.append(c)
    if zero_norm:
        warnings.warn("zero-norm embedding treated as cosine 0", ZeroNormEmbeddingWarning, stacklevel=3)
    return math.fsum(sims) / len(sims), zero_norm


def semantic_coherence(responses: Sequence[str], embedder: Embedder) -> float:
    """Mean cosine over unordered response pairs; a single response scores 1.0."""
    return _coherence(responses, embedder)[0]


def modal_index(responses: Sequence[str]) -> int:
    """Index of the first occurrence of the most frequent response.

    Ties between equally frequent classes go to the class seen first.
    """
    if len(responses) == 0:
        raise NoDataError("no responses")
    keys = [normalize_response(r) for r in responses]
    counts = Counter(keys)
    top = max(counts.values())
    for i, k in enumerate(keys):
        if counts[k] == top:
            return i
    raise AssertionError("unreachable")


def _confidence_values(matrix: LogLikelihoodMatrix, responses: Sequence[str]) -> tuple[np.ndarray, int]:
    if matrix.n < 2:
        raise NoDataError("confidence variance needs at least 2 prompts")
    if len(responses) != matrix.n:
        raise InvalidInputError(f"{len(responses)} responses for a matrix of size {matrix.n}")
    j = modal_index(responses)
    return np.asarray(matrix.entries[:, j], dtype=np.float64), matrix.lengths[j]


def confidence_variance(matrix: LogLikelihoodMatrix, responses: Sequence[str], normalize: bool = True) -> float:
    """Population variance of ``S[i][j*] / L[j*]`` over prompts ``i``."""
    values, length = _confidence_values(matrix, responses)
    if normalize:
        values = values / length
    return float(np.var(values))


def factor_report(matrix: LogLikelihoodMatrix, responses: Sequence[str], embedder: Embedder) -> FactorReport:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ZeroNormEmbeddingWarning)
        coherence, zero_norm = _coherence(responses, embedder)
    diversity = response_diversity(responses)
    return FactorReport(
        diversity=diversity,
        entropy=response_entropy(responses),
        coherence=coherence,
        confidence_variance=confidence_variance(matrix, responses),
        confidence_variance_raw=confidence_variance(matrix, responses, normalize=False),
        all_identical=diversity == 1,
        zero_norm_embeddings=zero_norm,
    )


def binned_means(xs: Sequence[float], psis: Sequence[float], bin_count: int = 20) -> list[tuple[float, float]]:
    """Mean psi per equal-width bin of ``xs``; empty bins are dropped.

    Bins are half-open ``[lo, hi)`` except the last, which includes the
    maximum. If every x is equal there is a single bin centred on it.
    """
    if len(xs) != len(psis):
        raise InvalidInputError(f"length mismatch: {len(xs)} xs vs {len(psis)} psis")
    if len(xs) == 0:
        raise InvalidInputError("need at least one point")
    if bin_count < 1:
        raise InvalidInputError("bin_count must be >= 1")
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(psis, dtype=np.float64)
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        return [(lo, float(np.mean(y)))]
    width = (hi - lo) / bin_count
    idx = np.minimum(((x - lo) / width).astype(int), bin_count - 1)
    out = []
    for b in range(bin_count):
        mask = idx == b
        if mask.any():
            out.append((lo + (b + 0.5) * width, float(np.mean(y[mask]))))
    return out


def rank_correlation(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman correlation, average ranks for ties."""
    if len(xs) != len(ys):
        raise InvalidInputError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 3:
        raise UndefinedCorrelationError("rank correlation needs at least 3 points")
    rx = rankdata(xs, method="average")
    ry = rankdata(ys, method="average")
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("one of the inputs has no variance")
    return float(np.clip(np.dot(dx, dy) / math.sqrt(sxx * syy), -1.0, 1.0))
