"""Source records and intent-aligned prompt sets built from them."""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from ..errors import InvalidInputError, ParaphraseShortfallError
from .spelling import SPELLING_SEEDS, SPELLING_TOKEN_COUNTS, spell_perturb
from .templates import TemplateSet, apply_template

VARIANTS_PER_CATEGORY = 20
MIXTURE_PER_CATEGORY = 7


class VariationType(str, enum.Enum):
    SPELLING = "spelling"
    TEMPLATE = "template"
    PARAPHRASE = "paraphrase"
    MIXTURE = "mixture"


class VariantCategory(str, enum.Enum):
    ORIGINAL = "original"
    SPELLING = "spelling"
    TEMPLATE = "template"
    PARAPHRASE = "paraphrase"


@dataclass(frozen=True)
class PromptRecord:
    id: str
    question: str
    options: tuple[str, ...] | None = None
    subject: str | None = None
    # (question, options or None, answer)
    exemplars: tuple[tuple, ...] = ()
    paraphrases: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.id:
            raise InvalidInputError("record id must be non-empty")
        if not self.question.strip():
            raise InvalidInputError(f"record {self.id}: empty question")
        if self.options is not None and len(self.options) != 4:
            raise InvalidInputError(f"record {self.id}: MCQ records need exactly 4 options, got {len(self.options)}")

    @property
    def is_mcq(self) -> bool:
        return self.options is not None

    @classmethod
    def from_dict(cls, data: dict) -> "PromptRecord":
        exemplars = []
        for ex in data.get("exemplars") or ():
            if isinstance(ex, dict):
                opts = ex.get("options")
                exemplars.append((ex["question"], tuple(opts) if opts is not None else None, ex["answer"]))
            else:
                q, opts, ans = ex
                exemplars.append((q, tuple(opts) if opts is not None else None, ans))
        options = data.get("options")
        paraphrases = data.get("paraphrases")
        return cls(
            id=str(data.get("id", "")),
            question=data.get("question", ""),
            options=tuple(options) if options is not None else None,
            subject=data.get("subject"),
            exemplars=tuple(exemplars),
            paraphrases=tuple(paraphrases) if paraphrases is not None else None,
        )


@dataclass(frozen=True)
class VariantSpec:
    category: VariantCategory
    rendered: str
    num_tokens: int | None = None
    seed: int | None = None
    template_id: int | None = None
    paraphrase_index: int | None = None
    # set on mixture members: position of the variant within its source category
    source_index: int | None = None

    def to_dict(self) -> dict:
        out = {"category": self.category.value, "rendered": self.rendered}
        for key in ("num_tokens", "seed", "template_id", "paraphrase_index", "source_index"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "VariantSpec":
        return cls(
            category=VariantCategory(data["category"]),
            rendered=data["rendered"],
            num_tokens=data.get("num_tokens"),
            seed=data.get("seed"),
            template_id=data.get("template_id"),
            paraphrase_index=data.get("paraphrase_index"),
            source_index=data.get("source_index"),
        )


@dataclass(frozen=True)
class IntentAlignedPromptSet:
    base_id: str
    variation_type: VariationType
    members: tuple[VariantSpec, ...]

    @property
    def n(self) -> int:
        return len(self.members)

    @property
    def set_id(self) -> str:
        return f"{self.base_id}/{self.variation_type.value}"

    @property
    def prompts(self) -> list[str]:
        return [m.rendered for m in self.members]

    def to_dict(self) -> dict:
        return {
            "base_id": self.base_id,
            "variation_type": self.variation_type.value,
            "n": self.n,
            "members": [m.to_dict() for m in self.members],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IntentAlignedPromptSet":
        return cls(
            base_id=data["base_id"],
            variation_type=VariationType(data["variation_type"]),
            members=tuple(VariantSpec.from_dict(m) for m in data["members"]),
        )


@dataclass(frozen=True)
class BuildConfig:
    few_shot: int = 0
    mixture_seed: int = 0
    mixture_per_category: int = MIXTURE_PER_CATEGORY

    def __post_init__(self):
        if self.few_shot < 0:
            raise InvalidInputError("few_shot must be >= 0")


def spelling_grid() -> list[tuple[int, int]]:
    return [(k, s) for k in SPELLING_TOKEN_COUNTS for s in SPELLING_SEEDS]


def build_sets(
    record: PromptRecord,
    templates: TemplateSet,
    paraphrases: Sequence[str] | None = None,
    config: BuildConfig = BuildConfig(),
    types: Iterable[VariationType] | None = None,
) -> list[IntentAlignedPromptSet]:
    """Build the spelling, template, paraphrase and mixture sets for one record.

    ``types`` restricts the output (default: all four, in that order).
    Paraphrases are only required for the paraphrase and mixture sets.

    The three pure sets hold the original prompt followed by its 20
    variants. The mixture set samples ``mixture_per_category`` variants from
    each category (original excluded), seeded by ``config.mixture_seed`` and
    the record id.
    """
    wanted = list(VariationType) if types is None else [VariationType(t) for t in types]
    if paraphrases is None:
        paraphrases = record.paraphrases or ()
    needs_paraphrases = VariationType.PARAPHRASE in wanted or VariationType.MIXTURE in wanted
    if needs_paraphrases and len(paraphrases) < VARIANTS_PER_CATEGORY:
        raise ParaphraseShortfallError(
            f"record {record.id}: need {VARIANTS_PER_CATEGORY} paraphrases, have {len(paraphrases)}",
            paraphrases,
        )
    if templates.mcq != record.is_mcq:
        raise InvalidInputError(
            f"record {record.id} is {'MCQ' if record.is_mcq else 'open-ended'} "
            f"but the template set is {'MCQ' if templates.mcq else 'open-ended'}"
        )

    exemplars = record.exemplars[: config.few_shot]
    if len(exemplars) < config.few_shot:
        raise InvalidInputError(f"record {record.id}: {config.few_shot}-shot requested, {len(exemplars)} exemplars available")
    subject = record.subject if templates.mcq else None

    def render(question: str, template: str | None = None) -> str:
        return apply_template(
            template or templates.default_template, question, record.options, subject, exemplars
        )

    original = VariantSpec(VariantCategory.ORIGINAL, render(record.question))

    spelling = [
        VariantSpec(
            VariantCategory.SPELLING,
            render(spell_perturb(record.question, k, s)),
            num_tokens=k,
            seed=s,
        )
        for k, s in spelling_grid()
    ]
    template = [
        VariantSpec(VariantCategory.TEMPLATE, render(record.question, t), template_id=i)
        for i, t in enumerate(templates.templates)
    ]
    paraphrase = [
        VariantSpec(VariantCategory.PARAPHRASE, render(p), paraphrase_index=i)
        for i, p in enumerate(paraphrases[:VARIANTS_PER_CATEGORY])
    ]

    sets = {
        VariationType.SPELLING: (original, *spelling),
        VariationType.TEMPLATE: (original, *template),
        VariationType.PARAPHRASE: (original, *paraphrase),
    }
    rng = random.Random(f"mixture:{config.mixture_seed}:{record.id}")
    mixture = []
    pools = (spelling, template, paraphrase) if VariationType.MIXTURE in wanted else ()
    for pool in pools:
        picks = sorted(rng.sample(range(len(pool)), config.mixture_per_category))
        for i in picks:
            src = pool[i]
            mixture.append(
                VariantSpec(
                    src.category,
                    src.rendered,
                    num_tokens=src.num_tokens,
                    seed=src.seed,
                    template_id=src.template_id,
                    paraphrase_index=src.paraphrase_index,
                    source_index=i,
                )
            )

    sets[VariationType.MIXTURE] = tuple(mixture)
    return [IntentAlignedPromptSet(record.id, vt, sets[vt]) for vt in VariationType if vt in wanted]
