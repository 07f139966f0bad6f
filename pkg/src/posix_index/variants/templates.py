"""Prompt templates and prompt assembly (instruction prefix, few-shot exemplars)."""
from __future__ import annotations

import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from ..errors import TemplateError

OPTION_FIELDS = ("a", "b", "c", "d")
INSTRUCTION_PREFIX = "The following are multiple choice questions (with answers) about {subject}.\n\n"
EXEMPLAR_SEPARATOR = "\n\n"

_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\"}


def decode_escapes(line: str) -> str:
    """Decode ``\\n``, ``\\t`` and ``\\\\``; any other backslash is kept literally."""
    out = []
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line) and line[i + 1] in _ESCAPES:
            out.append(_ESCAPES[line[i + 1]])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def placeholder_counts(template: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    try:
        for _, name, _, _ in string.Formatter().parse(template):
            if name is not None:
                counts[name] = counts.get(name, 0) + 1
    except ValueError as exc:
        raise TemplateError(f"malformed template {template!r}: {exc}") from exc
    return counts


def validate_template(template: str, mcq: bool) -> None:
    counts = placeholder_counts(template)
    if counts.get("q") != 1:
        raise TemplateError(f"template must contain exactly one {{q}} placeholder: {template!r}")
    unknown = set(counts) - {"q", "subject", *OPTION_FIELDS}
    if unknown:
        raise TemplateError(f"unknown placeholders {sorted(unknown)} in {template!r}")
    has_options = [counts.get(f, 0) for f in OPTION_FIELDS]
    if mcq and has_options != [1, 1, 1, 1]:
        raise TemplateError(f"MCQ template needs each of {{a}}..{{d}} exactly once: {template!r}")
    if not mcq and any(has_options):
        raise TemplateError(f"open-ended template must not carry option placeholders: {template!r}")


@dataclass(frozen=True)
class TemplateSet:
    default_template: str
    templates: tuple[str, ...]
    mcq: bool

    def __post_init__(self):
        if len(self.templates) != 20:
            raise TemplateError(f"a template set holds 20 variants, got {len(self.templates)}")
        for t in (self.default_template, *self.templates):
            validate_template(t, self.mcq)

    @classmethod
    def from_file(cls, path: str | Path, mcq: bool) -> "TemplateSet":
        text = Path(path).read_text(encoding="utf-8")
        return cls._parse(text, mcq, str(path))

    @classmethod
    def builtin(cls, mode: str) -> "TemplateSet":
        """``mode`` is ``"mcq"`` (MMLU-style) or ``"open-ended"`` (Alpaca-style)."""
        if mode == "mcq":
            name, mcq = "mmlu_templates.txt", True
        elif mode in ("open-ended", "open"):
            name, mcq = "alpaca_templates.txt", False
        else:
            raise TemplateError(f"unknown mode {mode!r}")
        text = resources.files("posix_index").joinpath("data", name).read_text(encoding="utf-8")
        return cls._parse(text, mcq, name)

    @classmethod
    def _parse(cls, text: str, mcq: bool, origin: str) -> "TemplateSet":
        lines = [decode_escapes(l) for l in text.split("\n") if l and not l.startswith("#")]
        if len(lines) != 21:
            raise TemplateError(f"{origin}: expected 1 default + 20 templates, found {len(lines)} lines")
        return cls(default_template=lines[0], templates=tuple(lines[1:]), mcq=mcq)


def _fill(template: str, question: str, options: Sequence[str] | None, subject: str | None) -> str:
    counts = placeholder_counts(template)
    if "" in counts:
        # positional form "Q:{}\n(A){} ...": question first, then options
        if set(counts) != {""}:
            raise TemplateError(f"cannot mix positional and named placeholders: {template!r}")
        args = [question, *(options or ())]
        if counts[""] != len(args):
            raise TemplateError(f"template has {counts['']} slots, got {len(args)} values")
        return template.format(*args)
    if counts.get("q") != 1:
        raise TemplateError(f"template must contain exactly one {{q}} placeholder: {template!r}")
    n_opt = sum(counts.get(f, 0) for f in OPTION_FIELDS)
    given = 0 if options is None else len(options)
    if n_opt != given:
        raise TemplateError(f"template expects {n_opt} options, got {given}")
    if "subject" in counts and subject is None:
        raise TemplateError("template uses {subject} but no subject was given")
    values = {"q": question, "subject": subject or ""}
    if options is not None:
        values.update(zip(OPTION_FIELDS, options))
    return template.format_map(values)


def apply_template(
    template: str,
    question: str,
    options: Sequence[str] | None = None,
    subject: str | None = None,
    exemplars: Sequence[tuple] | None = None,
) -> str:
    """Render a full prompt.

    Layout: instruction prefix (only when ``subject`` is given), then each
    exemplar rendered with the same template and its answer appended, then
    the live question. Blocks are joined by a blank line.

    ``exemplars`` holds ``(question, options, answer)`` triples; ``options``
    may be ``None`` for open-ended exemplars.
    """
    parts = []
    for ex in exemplars or ():
        ex_question, ex_options, ex_answer = ex
        parts.append(_fill(template, ex_question, ex_options, subject) + str(ex_answer))
    parts.append(_fill(template, question, options, subject))
    body = EXEMPLAR_SEPARATOR.join(parts)
    if subject is not None:
        body = INSTRUCTION_PREFIX.format(subject=subject) + body
    return body
