import json

import pytest

from posix_index.errors import NoDataError, PartialRunError, ProviderError
from posix_index.orchestrator import EvalConfig, ScoreCache, ScoreCacheKey, evaluate_dataset, evaluate_set
from posix_index.providers.bigram import ReferenceBigramLM
from posix_index.variants.sets import IntentAlignedPromptSet, VariantCategory, VariantSpec, VariationType

WORDS = ["apple", "bridge", "cactus", "dolphin", "ember", "falcon"]


def make_set(base_id="r0", n=21, spread=4, vt=VariationType.PARAPHRASE):
    members = tuple(
        VariantSpec(VariantCategory.ORIGINAL, f"{base_id} prompt {i} about {WORDS[i % spread]}") for i in range(n)
    )
    return IntentAlignedPromptSet(base_id, vt, members)


@pytest.fixture
def lm():
    vocab = [*WORDS, "</s>"]
    counts = [[(3 * i + 5 * j) % 11 + 1 for j in range(len(vocab) - 1)] + [0] for i in range(len(vocab))]
    return ReferenceBigramLM(vocab, counts, alpha=0.5)


class FailingProvider:
    """Delegates to ``inner`` until the ``fail_at``-th score call, then fails every call (an outage)."""

    def __init__(self, inner, fail_at):
        self.inner = inner
        self.provider_id = inner.provider_id
        self.fail_at = fail_at
        self.calls = 0

    def generate(self, prompt, max_new_tokens):
        return self.inner.generate(prompt, max_new_tokens)

    def score(self, prompt, tokens):
        self.calls += 1
        if self.calls >= self.fail_at:
            raise ProviderError("injected failure")
        return self.inner.score(prompt, tokens)


def test_cold_then_warm(lm, tmp_path):
    cache = ScoreCache(tmp_path / "c.jsonl")
    cold = evaluate_set(lm, make_set(), 5, cache)
    assert (cold.ledger.generate_calls, cold.ledger.score_calls, cold.ledger.cache_hits) == (21, 420, 0)
    assert cold.ledger.self_check_calls == 1 and cold.ledger.self_check_max_abs_diff < 1e-9
    warm = evaluate_set(lm, make_set(), 5, ScoreCache(tmp_path / "c.jsonl"))
    assert (warm.ledger.generate_calls, warm.ledger.score_calls, warm.ledger.cache_hits) == (0, 0, 441)
    assert warm.score.psi == cold.score.psi
    assert warm.ledger.self_check_calls == 0


def test_duplicate_prompts_still_cost_full_cold(lm):
    # every prompt conditions on the same word, so many responses coincide
    cold = evaluate_set(lm, make_set(spread=1), 5, ScoreCache())
    assert (cold.ledger.generate_calls, cold.ledger.score_calls, cold.ledger.cache_hits) == (21, 420, 0)


def test_order_and_parallelism_independent(lm):
    ref = evaluate_set(lm, make_set(), 5, config=EvalConfig(in_flight=1))
    shuffled = evaluate_set(lm, make_set(), 5, config=EvalConfig(in_flight=8, order_seed=7))
    assert shuffled.score.psi == ref.score.psi
    assert (shuffled.matrix.entries == ref.matrix.entries).all()


def test_budget_from_config(lm):
    ev = evaluate_set(lm, make_set(n=3), config=EvalConfig(max_new_tokens=2))
    assert all(r.length <= 2 for r in ev.responses)


def test_degenerate_set_flagged():
    lm = ReferenceBigramLM(["w", "</s>"], [[0, 5], [0, 5]], alpha=0.1)
    ev = evaluate_set(lm, make_set(n=3), 5)
    assert ev.degenerate and ev.matrix is None and ev.factors is None
    assert ev.ledger.degenerate_sets == ["r0/paraphrase"]
    assert ev.ledger.score_calls == 0


def test_partial_run_and_resume_bit_identical(lm, tmp_path):
    ref = evaluate_set(lm, make_set(), 5, ScoreCache())
    cache = ScoreCache(tmp_path / "c.jsonl")
    with pytest.raises(PartialRunError) as info:
        evaluate_set(FailingProvider(lm, fail_at=150), make_set(), 5, cache, EvalConfig(in_flight=1))
    err = info.value
    assert err.set_id == "r0/paraphrase" and err.exit_code == 5
    assert len(err.completed) == 21 + 149
    resumed = evaluate_set(lm, make_set(), 5, ScoreCache(tmp_path / "c.jsonl"))
    # coinciding responses share cache keys, so a key stored before the
    # failure can serve more than one cell
    assert resumed.ledger.cache_hits >= 21 + 149
    assert resumed.ledger.cache_hits + resumed.ledger.score_calls == 441
    assert resumed.score.psi == ref.score.psi


def test_corrupt_cache_line_skipped(lm, tmp_path):
    path = tmp_path / "c.jsonl"
    evaluate_set(lm, make_set(n=4), 5, ScoreCache(path))
    lines = path.read_text().splitlines()
    lines[3] = lines[3][:20]
    path.write_text("\n".join(lines) + "\n" + '{"torn": ')
    cache = ScoreCache(path)
    assert cache.corrupt_lines == 2
    ev = evaluate_set(lm, make_set(n=4), 5, cache)
    assert ev.ledger.generate_calls + ev.ledger.score_calls == 1
    # the torn tail was terminated, so the re-appended record parses
    assert ScoreCache(path).corrupt_lines == 2


def test_cache_key_digests():
    k = ScoreCacheKey.for_score("p", "prompt", [1, 2])
    assert not k.is_generation and len(k.prompt_digest) == 64
    assert ScoreCacheKey.for_generation("p", "prompt", 5).response_digest == "greedy:5"


def test_cache_file_records(lm, tmp_path):
    evaluate_set(lm, make_set(n=3), 5, ScoreCache(tmp_path / "c.jsonl"))
    recs = [json.loads(l) for l in (tmp_path / "c.jsonl").read_text().splitlines()]
    scores = [r for r in recs if not r["response_digest"].startswith("greedy:")]
    assert len(scores) == 6
    assert {"provider_id", "prompt_digest", "response_digest", "token_logprobs", "sum", "created_at"} <= set(scores[0])


def test_dataset_grouping_and_order(lm):
    sets = [make_set(f"r{i}", n=5, spread=1 + i % 4) for i in range(4)]
    sets.append(make_set("t0", n=5, vt=VariationType.TEMPLATE))
    res = evaluate_dataset(lm, sets, EvalConfig())
    assert set(res.posix) == {VariationType.PARAPHRASE, VariationType.TEMPLATE}
    assert res.ledger.score_calls == 5 * 20
    rev = evaluate_dataset(lm, sets[::-1], EvalConfig())
    assert rev.posix[VariationType.PARAPHRASE].posix == pytest.approx(res.posix[VariationType.PARAPHRASE].posix, abs=1e-15)


def test_dataset_all_degenerate():
    lm = ReferenceBigramLM(["w", "</s>"], [[0, 5], [0, 5]], alpha=0.1)
    with pytest.raises(NoDataError):
        evaluate_dataset(lm, [make_set(n=3)])
    with pytest.raises(NoDataError):
        evaluate_dataset(lm, [])
