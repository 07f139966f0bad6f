"""Keyboard-typo perturbations applied to whitespace-delimited words."""
from __future__ import annotations

import enum
import random
import re
import string
from functools import lru_cache
from importlib import resources
from pathlib import Path

from ..errors import InapplicableErrorType, InvalidInputError

SPELLING_TOKEN_COUNTS = (1, 2, 4, 8)
SPELLING_SEEDS = (0, 1, 2, 3, 4)

_WS_SPLIT = re.compile(r"(\s+)")


class CharError(str, enum.Enum):
    INSERTION = "insertion"
    OMISSION = "omission"
    TRANSPOSITION = "transposition"
    SUBSTITUTION = "substitution"


def load_adjacency(path: str | Path | None = None) -> dict[str, tuple[str, ...]]:
    """Parse ``letter: neighbor,neighbor,...`` lines."""
    if path is None:
        text = resources.files("posix_index").joinpath("data", "qwerty.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    adjacency = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, rest = line.partition(":")
        if not sep or len(key.strip()) != 1:
            raise InvalidInputError(f"adjacency line {lineno}: expected 'letter: a,b,...'")
        adjacency[key.strip().lower()] = tuple(n.strip().lower() for n in rest.split(",") if n.strip())
    return adjacency


@lru_cache(maxsize=1)
def default_adjacency() -> dict[str, tuple[str, ...]]:
    return load_adjacency()


def _neighbors(ch: str, adjacency) -> tuple[str, ...]:
    found = adjacency.get(ch.lower(), ())
    if ch.isupper():
        return tuple(n.upper() for n in found)
    return found


def applicable_errors(word: str, adjacency=None) -> list[CharError]:
    adjacency = adjacency or default_adjacency()
    out = [CharError.INSERTION]
    if len(word) >= 2:
        # a one-letter word would vanish and shift word boundaries
        out.append(CharError.OMISSION)
    if any(word[i] != word[i + 1] for i in range(len(word) - 1)):
        out.append(CharError.TRANSPOSITION)
    if any(_neighbors(c, adjacency) for c in word):
        out.append(CharError.SUBSTITUTION)
    return out


def apply_char_error(
    word: str,
    error: CharError | str,
    rng: random.Random,
    position: int | None = None,
    char: str | None = None,
    adjacency=None,
) -> str:
    """Apply one spelling error to ``word``.

    ``position`` and ``char`` pin the otherwise random choices (insertion
    point and letter, deleted index, left index of the swapped pair,
    substituted index and replacement). Raises ``InapplicableErrorType`` when
    the error cannot change the word.
    """
    if not word:
        raise InvalidInputError("cannot perturb an empty word")
    error = CharError(error)
    adjacency = adjacency or default_adjacency()

    if error is CharError.INSERTION:
        pos = rng.randrange(len(word) + 1) if position is None else position
        letter = rng.choice(string.ascii_lowercase) if char is None else char
        return word[:pos] + letter + word[pos:]

    if error is CharError.OMISSION:
        if len(word) < 2:
            raise InapplicableErrorType(f"omission would delete the whole word {word!r}")
        pos = rng.randrange(len(word)) if position is None else position
        return word[:pos] + word[pos + 1:]

    if error is CharError.TRANSPOSITION:
        if len(word) < 2:
            raise InapplicableErrorType(f"transposition needs two letters, got {word!r}")
        if position is None:
            candidates = [i for i in range(len(word) - 1) if word[i] != word[i + 1]]
            if not candidates:
                raise InapplicableErrorType(f"no distinct adjacent letters to swap in {word!r}")
            position = rng.choice(candidates)
        return word[:position] + word[position + 1] + word[position] + word[position + 2:]

    # substitution
    if position is None:
        candidates = [i for i, c in enumerate(word) if _neighbors(c, adjacency)]
        if not candidates:
            raise InapplicableErrorType(f"no keyboard neighbours for any character of {word!r}")
        position = rng.choice(candidates)
    options = _neighbors(word[position], adjacency)
    if not options:
        raise InapplicableErrorType(f"{word[position]!r} has no keyboard neighbours")
    if char is None:
        char = rng.choice(options)
    elif char not in options:
        raise InvalidInputError(f"{char!r} is not adjacent to {word[position]!r}")
    return word[:position] + char + word[position + 1:]


def perturb_word(word: str, rng: random.Random, adjacency=None) -> tuple[str, CharError]:
    """Pick an error uniformly and apply it, falling back when it cannot apply."""
    adjacency = adjacency or default_adjacency()
    error = rng.choice(list(CharError))
    allowed = applicable_errors(word, adjacency)
    if error not in allowed:
        if error is CharError.SUBSTITUTION:
            error = CharError.INSERTION
        else:
            error = rng.choice(allowed)
    return apply_char_error(word, error, rng, adjacency=adjacency), error


def split_words(text: str) -> list[str]:
    """Split keeping whitespace runs, so ``"".join(parts) == text``.

    Words sit at even indices once leading whitespace is accounted for.
    """
    return [p for p in _WS_SPLIT.split(text) if p != ""]


def spell_perturb(question: str, num_tokens: int, seed: int, adjacency=None) -> str:
    """Misspell ``min(num_tokens, word_count)`` distinct words of ``question``."""
    parts = split_words(question)
    word_idx = [i for i, p in enumerate(parts) if not p.isspace()]
    if not word_idx:
        raise InvalidInputError("question contains no words")
    if num_tokens < 1:
        raise InvalidInputError("num_tokens must be >= 1")
    rng = random.Random(f"spelling:{num_tokens}:{seed}")
    chosen = rng.sample(word_idx, min(num_tokens, len(word_idx)))
    for i in sorted(chosen):
        parts[i], _ = perturb_word(parts[i], rng, adjacency)
    return "".join(parts)
