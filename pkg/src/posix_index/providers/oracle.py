"""Brute-force checks for the reference bigram LM.

These recompute probabilities straight from the raw counts with plain
floats and never touch ``ReferenceBigramLM.log_table``, so they can serve as
an independent oracle for ``score`` and ``generate``.
"""
from __future__ import annotations

import itertools
import math
import operator
import string
from typing import Iterator, Sequence

from ..errors import InvalidInputError
from .bigram import ReferenceBigramLM


def _row_probs(lm: ReferenceBigramLM, prev: int) -> list[float]:
    v = len(lm.vocabulary)
    counts = [float(c) for c in lm.counts[prev]]
    total = sum(counts) + lm.alpha * v
    base = [(c + lm.alpha) / total for c in counts]
    powered = [p ** (1.0 / lm.temperature) for p in base]
    z = sum(powered)
    return [p / z for p in powered]


def _context(lm: ReferenceBigramLM, prompt: str) -> int:
    vocab = list(lm.vocabulary)
    words = prompt.split()
    for word in words[::-1]:
        w = word.strip(string.punctuation)
        if w in vocab:
            return vocab.index(w)
    return 0


def brute_force_sequence_prob(lm: ReferenceBigramLM, prompt: str, response_tokens: Sequence[int]) -> float:
    """Chain-rule probability of ``response_tokens`` following ``prompt``."""
    v = len(lm.vocabulary)
    try:
        response_tokens = [operator.index(t) for t in response_tokens]
    except TypeError:
        raise InvalidInputError("token ids must be integers") from None
    for t in response_tokens:
        if not 0 <= t < v:
            raise InvalidInputError(f"token {t!r} is out of vocabulary")
    prob = 1.0
    prev = _context(lm, prompt)
    for t in response_tokens:
        prob *= _row_probs(lm, prev)[t]
        prev = t
    return prob


def enumerate_continuations(lm: ReferenceBigramLM, prompt: str, max_len: int) -> Iterator[tuple[tuple[int, ...], float, tuple[float, ...]]]:
    """Every continuation of at most ``max_len`` tokens.

    A continuation ends either on the end marker (included as its last
    token) or after ``max_len`` non-end tokens. Yields ``(tokens, joint
    probability, per-step conditional probabilities)``; the joint
    probabilities sum to one.
    """
    v = len(lm.vocabulary)
    end = lm.end_id
    start = _context(lm, prompt)
    non_end = [t for t in range(v) if t != end]
    for length in range(1, max_len + 1):
        # sequences of `length` tokens whose last token is the end marker
        # (or, at max_len, any token)
        for body in itertools.product(non_end, repeat=length - 1):
            lasts = range(v) if length == max_len else (end,)
            for last in lasts:
                seq = (*body, last)
                steps = []
                prev = start
                for t in seq:
                    steps.append(_row_probs(lm, prev)[t])
                    prev = t
                yield seq, math.prod(steps), tuple(steps)


def greedy_by_enumeration(lm: ReferenceBigramLM, prompt: str, max_len: int) -> tuple[int, ...]:
    """Greedy decode recovered from the full enumeration.

    Greedy decoding is the lexicographic maximum of the per-step
    probability vector, ties going to the lower token id. (It is generally
    not the maximum of the joint probability.) The end marker, if reached,
    is stripped to match ``generate``'s output.
    """
    best = max(
        enumerate_continuations(lm, prompt, max_len),
        key=lambda item: tuple(x for p, t in zip(item[2], item[0]) for x in (p, -t)),
    )
    seq = best[0]
    if lm.end_id in seq:
        seq = seq[: seq.index(lm.end_id)]
    return seq
