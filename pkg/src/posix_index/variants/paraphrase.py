"""Collecting paraphrases from a provider, plus the on-disk paraphrase cache."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Protocol, Sequence

from ..errors import InvalidInputError, ParaphraseShortfallError, ProviderError

log = logging.getLogger(__name__)


class ParaphraseProvider(Protocol):
    def paraphrase(self, question: str, n: int) -> list[str]: ...


def request_paraphrases(client: ParaphraseProvider, question: str, k: int = 20, max_rounds: int = 3) -> list[str]:
    """Return exactly ``k`` distinct paraphrases, none equal to ``question``.

    Each round asks the provider for the remaining shortfall. Comparison is
    case-sensitive after stripping surrounding whitespace.
    """
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    original = question.strip()
    seen = {original}
    collected: list[str] = []
    for round_no in range(max_rounds):
        need = k - len(collected)
        try:
            batch = client.paraphrase(question, need)
        except ProviderError:
            raise
        except Exception as exc:  # provider bug or transport error not wrapped yet
            raise ProviderError(f"paraphrase provider failed: {exc}") from exc
        for text in batch:
            text = text.strip()
            if text and text not in seen:
                seen.add(text)
                collected.append(text)
                if len(collected) == k:
                    return collected
        log.debug("paraphrase round %d: %d/%d collected", round_no + 1, len(collected), k)
    raise ParaphraseShortfallError(
        f"collected {len(collected)} of {k} unique paraphrases in {max_rounds} rounds", collected
    )


class ParaphraseCache:
    """JSON file mapping record id to its list of paraphrases."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._data: dict[str, list[str]] = {}
        if self.path.exists():
            self._data = json.loads(self.path.read_text(encoding="utf-8"))

    def get(self, record_id: str) -> list[str] | None:
        return self._data.get(record_id)

    def put(self, record_id: str, paraphrases: Sequence[str]) -> None:
        self._data[record_id] = list(paraphrases)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        tmp.write_text(json.dumps(self._data, indent=1, sort_keys=True, ensure_ascii=False), encoding="utf-8")
        tmp.replace(self.path)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._data
