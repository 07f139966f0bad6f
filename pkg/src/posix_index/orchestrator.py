"""End-to-end evaluation of prompt sets against a scoring provider.

For a set of N prompts this runs N greedy generations and N(N-1) cross
scores, reusing each generation's own log-probabilities for the diagonal.
Every call goes through an append-only, content-addressed cache, so reruns
cost nothing and an interrupted run resumes where it stopped.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .diagnostics import FactorReport, factor_report
from .errors import NoDataError, PartialRunError, PosixError
from .providers.base import Embedder, GenerationResult, ScoreResult, ScoringProvider, generate, score
from .sensitivity import (
    AggregateStats,
    LogLikelihoodMatrix,
    PosixResult,
    SensitivityScore,
    aggregate,
    compute_posix,
    compute_psi,
)
from .variants.sets import IntentAlignedPromptSet, VariationType

log = logging.getLogger(__name__)

DEFAULT_IN_FLIGHT = 8


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ScoreCacheKey:
    """Cache address of one backend call.

    Score records hash the response token sequence into ``response_digest``.
    Generation records have no response yet and store ``greedy:<budget>``
    in that slot instead.
    """

    provider_id: str
    prompt_digest: str
    response_digest: str

    @classmethod
    def for_score(cls, provider_id: str, prompt: str, tokens: Sequence) -> "ScoreCacheKey":
        return cls(provider_id, sha256_hex(prompt), sha256_hex(json.dumps(list(tokens))))

    @classmethod
    def for_generation(cls, provider_id: str, prompt: str, max_new_tokens: int) -> "ScoreCacheKey":
        return cls(provider_id, sha256_hex(prompt), f"greedy:{max_new_tokens}")

    @property
    def is_generation(self) -> bool:
        return self.response_digest.startswith("greedy:")


class ScoreCache:
    """Append-only JSON-lines cache; an in-memory dict when ``path`` is None.

    A line that fails to parse is ignored on load and only that entry is
    lost. Appends are serialized; lookups take no lock.

    Every entry carries an insertion sequence number. Lookups may pass
    ``before=cache.mark()`` to see only entries that existed at that point,
    which keeps call accounting independent of scheduling when one run
    produces the same key twice.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[ScoreCacheKey, tuple[dict, int]] = {}
        self._seq = 0
        self._lock = threading.Lock()
        self.corrupt_lines = 0
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        raw = self.path.read_bytes()
        for line in raw.decode("utf-8", errors="replace").splitlines():
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                key = ScoreCacheKey(rec["provider_id"], rec["prompt_digest"], rec["response_digest"])
                if key.is_generation:
                    GenerationResult.from_dict(rec)
                else:
                    ScoreResult.from_dict(rec)
            except (ValueError, KeyError, TypeError):
                self.corrupt_lines += 1
                continue
            self._entries[key] = (rec, 0)
        if raw and not raw.endswith(b"\n"):
            # a torn final line: start the next record on a fresh line
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write("\n")
        if self.corrupt_lines:
            log.warning("%s: skipped %d corrupt cache lines", self.path, self.corrupt_lines)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: ScoreCacheKey) -> bool:
        return key in self._entries

    def mark(self) -> int:
        return self._seq

    def _lookup(self, key: ScoreCacheKey, before: int | None) -> dict | None:
        found = self._entries.get(key)
        if found is None or (before is not None and found[1] > before):
            return None
        return found[0]

    def get_score(self, key: ScoreCacheKey, before: int | None = None) -> ScoreResult | None:
        rec = self._lookup(key, before)
        return None if rec is None else ScoreResult.from_dict(rec)

    def get_generation(self, key: ScoreCacheKey, before: int | None = None) -> GenerationResult | None:
        rec = self._lookup(key, before)
        return None if rec is None else GenerationResult.from_dict(rec)

    def put(self, key: ScoreCacheKey, payload: dict) -> None:
        rec = {
            "provider_id": key.provider_id,
            "prompt_digest": key.prompt_digest,
            "response_digest": key.response_digest,
            **payload,
            "created_at": time.time(),
        }
        with self._lock:
            if key in self._entries:
                return
            self._seq += 1
            self._entries[key] = (rec, self._seq)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


@dataclass
class RunLedger:
    generate_calls: int = 0
    score_calls: int = 0
    cache_hits: int = 0
    degenerate_sets: list[str] = field(default_factory=list)
    clamped_entries: int = 0
    self_check_calls: int = 0
    self_check_max_abs_diff: float = 0.0

    def __post_init__(self):
        self._lock = threading.Lock()

    def bump(self, name: str, by: int = 1) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + by)

    def merge(self, other: "RunLedger") -> None:
        self.generate_calls += other.generate_calls
        self.score_calls += other.score_calls
        self.cache_hits += other.cache_hits
        self.degenerate_sets.extend(other.degenerate_sets)
        self.clamped_entries += other.clamped_entries
        self.self_check_calls += other.self_check_calls
        self.self_check_max_abs_diff = max(self.self_check_max_abs_diff, other.self_check_max_abs_diff)

    def to_dict(self) -> dict:
        return {
            "generate_calls": self.generate_calls,
            "score_calls": self.score_calls,
            "cache_hits": self.cache_hits,
            "degenerate_sets": list(self.degenerate_sets),
            "clamped_entries": self.clamped_entries,
            "self_check_calls": self.self_check_calls,
            "self_check_max_abs_diff": self.self_check_max_abs_diff,
        }


@dataclass(frozen=True)
class EvalConfig:
    max_new_tokens: int = 5
    in_flight: int = DEFAULT_IN_FLIGHT
    # re-score one random diagonal cell per set to confirm teacher forcing
    # agrees with the generation pass; not counted in score_calls
    self_check: bool = True
    # shuffle cell dispatch (testing order independence); None keeps row-major
    order_seed: int | None = None
    embedder: Embedder | None = None


@dataclass
class SetEvaluation:
    prompt_set: IntentAlignedPromptSet
    responses: list[GenerationResult]
    matrix: LogLikelihoodMatrix | None
    score: SensitivityScore
    factors: FactorReport | None
    ledger: RunLedger

    @property
    def degenerate(self) -> bool:
        return self.score.degenerate

    @property
    def texts(self) -> list[str]:
        return [r.text for r in self.responses]


def _generation(provider, cache, mark, ledger, prompt, max_new_tokens) -> tuple[GenerationResult, bool]:
    key = ScoreCacheKey.for_generation(provider.provider_id, prompt, max_new_tokens)
    hit = cache.get_generation(key, before=mark)
    if hit is not None:
        ledger.bump("cache_hits")
        return hit, False
    result = generate(provider, prompt, max_new_tokens)
    ledger.bump("generate_calls")
    cache.put(key, result.to_dict())
    return result, True


def _cross_score(provider, cache, mark, ledger, prompt, tokens) -> ScoreResult:
    key = ScoreCacheKey.for_score(provider.provider_id, prompt, tokens)
    hit = cache.get_score(key, before=mark)
    if hit is not None:
        ledger.bump("cache_hits")
        return hit
    result = score(provider, prompt, tokens)
    ledger.bump("score_calls")
    cache.put(key, result.to_dict())
    return result


def _run_parallel(fn, items, in_flight):
    """Run ``fn`` over ``items``; return (results by item, first error, failed items)."""
    results = {}
    errors = []
    with ThreadPoolExecutor(max_workers=max(1, in_flight)) as pool:
        futures = {pool.submit(fn, item): item for item in items}
        for fut in as_completed(futures):
            item = futures[fut]
            try:
                results[item] = fut.result()
            except PosixError as exc:
                errors.append((item, exc))
    return results, errors


def evaluate_set(
    provider: ScoringProvider,
    prompt_set: IntentAlignedPromptSet,
    max_new_tokens: int | None = None,
    cache: ScoreCache | None = None,
    config: EvalConfig | None = None,
) -> SetEvaluation:
    """Generate, fill the log-likelihood matrix, and compute psi and factors.

    ``max_new_tokens`` overrides ``config.max_new_tokens`` when given.
    """
    config = config or EvalConfig()
    if max_new_tokens is None:
        max_new_tokens = config.max_new_tokens
    cache = cache if cache is not None else ScoreCache()
    ledger = RunLedger()
    prompts = prompt_set.prompts
    n = len(prompts)
    set_id = prompt_set.set_id
    mark = cache.mark()

    gens, errors = _run_parallel(
        lambda i: _generation(provider, cache, mark, ledger, prompts[i], max_new_tokens), range(n), config.in_flight
    )
    if errors:
        cells = sorted((i, i) for i in gens)
        raise PartialRunError(
            f"{set_id}: {len(errors)} generation(s) failed: {errors[0][1]}", set_id, cells, errors[0][1]
        ) from errors[0][1]
    responses = [gens[i][0] for i in range(n)]
    fresh_generation = any(gens[i][1] for i in range(n))

    if any(r.length == 0 for r in responses):
        ledger.degenerate_sets.append(set_id)
        log.info("%s: empty generation, set marked degenerate", set_id)
        return SetEvaluation(
            prompt_set, responses, None, SensitivityScore(math.nan, n, True, set_id), None, ledger
        )

    cells = [(i, j) for i in range(n) for j in range(n) if i != j]
    if config.order_seed is not None:
        random.Random(config.order_seed).shuffle(cells)
    scored, errors = _run_parallel(
        lambda c: _cross_score(provider, cache, mark, ledger, prompts[c[0]], responses[c[1]].tokens),
        cells,
        config.in_flight,
    )
    if errors:
        done = sorted([(i, i) for i in range(n)] + list(scored))
        raise PartialRunError(
            f"{set_id}: {len(errors)} of {len(cells)} score cells failed: {errors[0][1]}",
            set_id,
            done,
            errors[0][1],
        ) from errors[0][1]

    entries = [[0.0] * n for _ in range(n)]
    clamped = 0
    for j, r in enumerate(responses):
        entries[j][j] = r.total_logprob
        clamped += r.clamped > 0
    for (i, j), res in scored.items():
        entries[i][j] = res.sum
        clamped += res.clamped > 0
    ledger.clamped_entries += clamped
    matrix = LogLikelihoodMatrix(entries, tuple(r.length for r in responses), clamped_cells=clamped)
    sens = compute_psi(matrix, set_id)

    if config.self_check and fresh_generation:
        j = random.Random(set_id).randrange(n)
        check = score(provider, prompts[j], responses[j].tokens)
        ledger.self_check_calls += 1
        diff = abs(check.sum - responses[j].total_logprob)
        ledger.self_check_max_abs_diff = max(ledger.self_check_max_abs_diff, diff)
        if diff > 1e-6:
            log.warning("%s: self-likelihood of response %d differs by %.3g between generate and score", set_id, j, diff)

    factors = None
    if config.embedder is not None:
        factors = factor_report(matrix, [r.text for r in responses], config.embedder)
    return SetEvaluation(prompt_set, responses, matrix, sens, factors, ledger)


@dataclass
class DatasetResult:
    evaluations: list[SetEvaluation]
    posix: dict[VariationType, PosixResult]
    stats: dict[VariationType, AggregateStats]
    ledger: RunLedger


def evaluate_dataset(
    provider: ScoringProvider,
    sets: Sequence[IntentAlignedPromptSet],
    config: EvalConfig = EvalConfig(),
    cache: ScoreCache | None = None,
) -> DatasetResult:
    """POSIX and summary statistics per variation type."""
    if not sets:
        raise NoDataError("no prompt sets to evaluate")
    cache = cache if cache is not None else ScoreCache()
    total = RunLedger()
    evaluations = []
    for pset in sets:
        ev = evaluate_set(provider, pset, config.max_new_tokens, cache, config)
        total.merge(ev.ledger)
        evaluations.append(ev)

    if all(ev.degenerate for ev in evaluations):
        raise NoDataError("every prompt set is degenerate")

    posix: dict[VariationType, PosixResult] = {}
    stats: dict[VariationType, AggregateStats] = {}
    for vt in VariationType:
        scores = [ev.score for ev in evaluations if ev.prompt_set.variation_type is vt]
        if not scores or all(s.degenerate for s in scores):
            continue
        posix[vt] = compute_posix(scores)
        stats[vt] = aggregate([s.psi for s in scores if not s.degenerate])
    return DatasetResult(evaluations, posix, stats, total)
