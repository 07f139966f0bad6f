"""Intent-aligned prompt variant generation."""
from .paraphrase import ParaphraseCache, ParaphraseProvider, request_paraphrases
from .sets import (
    BuildConfig,
    IntentAlignedPromptSet,
    PromptRecord,
    VariantCategory,
    VariantSpec,
    VariationType,
    build_sets,
    spelling_grid,
)
from .spelling import CharError, apply_char_error, load_adjacency, spell_perturb
from .templates import INSTRUCTION_PREFIX, TemplateSet, apply_template

__all__ = [
    "BuildConfig",
    "CharError",
    "INSTRUCTION_PREFIX",
    "IntentAlignedPromptSet",
    "ParaphraseCache",
    "ParaphraseProvider",
    "PromptRecord",
    "TemplateSet",
    "VariantCategory",
    "VariantSpec",
    "VariationType",
    "apply_char_error",
    "apply_template",
    "build_sets",
    "load_adjacency",
    "request_paraphrases",
    "spell_perturb",
    "spelling_grid",
]
