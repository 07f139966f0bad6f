"""Command-line pipeline: variants -> score -> posix -> report.

Each stage reads and writes files in the output directory, so stages can be
run one at a time or all together with ``run``::

    posix-index run --config bundled:smoke --output-dir out/
    posix-index variants --dataset data.jsonl --mode mcq --output-dir out/
    posix-index score --dataset data.jsonl --output-dir out/
    posix-index posix --dataset data.jsonl --output-dir out/
    posix-index report --output-dir out/

Settings come from defaults, then the ``--config`` JSON file, then flags.
Failures print one JSON line on stderr (``{"error", "exit_code", "message"}``)
and exit with 2 (config), 3 (provider), 4 (data) or 5 (partial, resumable).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import (
    RunConfig,
    build_embedder,
    build_paraphraser,
    build_provider,
    check_credentials,
    load_dataset,
    load_exclusions,
    provider_id_for,
)
from .errors import ConfigError, DataError, NoDataError, ParaphraseShortfallError, PartialRunError, PosixError
from .orchestrator import EvalConfig, ScoreCache, evaluate_set
from .report import ReportRecord, emit_plot_data, read_records, write_aggregate, write_manifest, write_records
from .sensitivity import SensitivityScore, compute_posix
from .variants.paraphrase import ParaphraseCache, request_paraphrases
from .variants.sets import BuildConfig, IntentAlignedPromptSet, VariationType, build_sets
from .variants.templates import TemplateSet

log = logging.getLogger("posix_index")

SETS_FILE = "sets.jsonl"
RECORDS_FILE = "records.jsonl"
POSIX_FILE = "posix.json"
AGGREGATE_FILE = "aggregate.csv"
MANIFEST_FILE = "manifest.json"
# wall-clock times and cold/warm call counts; kept out of the reproducible files
RUN_LOG_FILE = "run_log.json"
RESUME_FILE = "resume.json"


class CacheMissError(DataError):
    pass


class CacheOnlyProvider:
    """Stands in for the backend when metrics must come from the cache alone."""

    def __init__(self, provider_id: str):
        self.provider_id = provider_id

    def generate(self, prompt, max_new_tokens):
        raise CacheMissError("generation missing from cache; run the score stage first")

    def score(self, prompt, response_tokens):
        raise CacheMissError("score missing from cache; run the score stage first")


def _needs_paraphrases(config: RunConfig) -> bool:
    return bool({VariationType.PARAPHRASE, VariationType.MIXTURE} & set(config.types))


def _paraphrases_for(record, pcache: ParaphraseCache | None, paraphraser) -> list[str] | None:
    """Inline paraphrases first, then the paraphrase cache file, then the provider."""
    if record.paraphrases is not None:
        return list(record.paraphrases)
    if pcache is not None and record.id in pcache:
        return pcache.get(record.id)
    if paraphraser is None:
        raise DataError(f"record {record.id}: no paraphrases inline or cached and no paraphraser configured")
    found = request_paraphrases(paraphraser, record.question)
    if pcache is not None:
        pcache.put(record.id, found)
    return found


def build_prompt_sets(config: RunConfig) -> list[IntentAlignedPromptSet]:
    if not config.dataset:
        raise DataError("no dataset given")
    records = load_dataset(config.dataset)
    excluded = set(load_exclusions(config.exclude))
    records = [r for r in records if r.id not in excluded]
    if not records:
        raise NoDataError("every record is excluded")
    templates = TemplateSet.from_file(config.templates, config.mode == "mcq") if config.templates else TemplateSet.builtin(config.mode)
    build = BuildConfig(few_shot=config.few_shot, mixture_seed=config.mixture_seed)

    pcache = ParaphraseCache(config.paraphrase_cache) if config.paraphrase_cache else None
    paraphraser = build_paraphraser(config.paraphraser)
    sets = []
    for record in records:
        paraphrases = _paraphrases_for(record, pcache, paraphraser) if _needs_paraphrases(config) else None
        try:
            sets.extend(build_sets(record, templates, paraphrases, build, config.types))
        except ParaphraseShortfallError as exc:
            raise DataError(str(exc)) from exc
    return sets


def _write_sets(path: Path, sets: Sequence[IntentAlignedPromptSet]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        "".join(json.dumps(s.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for s in sets), encoding="utf-8"
    )


def _load_or_build_sets(config: RunConfig) -> list[IntentAlignedPromptSet]:
    path = Path(config.output_dir) / SETS_FILE
    if path.exists():
        lines = path.read_text(encoding="utf-8").splitlines()
        return [IntentAlignedPromptSet.from_dict(json.loads(l)) for l in lines if l.strip()]
    sets = build_prompt_sets(config)
    _write_sets(path, sets)
    return sets


def stage_variants(config: RunConfig) -> dict:
    sets = build_prompt_sets(config)
    _write_sets(Path(config.output_dir) / SETS_FILE, sets)
    return {"sets": len(sets)}


def _eval_config(config: RunConfig, embedder=None) -> EvalConfig:
    return EvalConfig(max_new_tokens=config.budget, in_flight=config.in_flight, embedder=embedder)


def stage_score(config: RunConfig) -> dict:
    check_credentials(config)
    sets = _load_or_build_sets(config)
    provider = build_provider(config.provider)
    cache = ScoreCache(config.cache_path)
    ecfg = _eval_config(config)
    totals = {"generate_calls": 0, "score_calls": 0, "cache_hits": 0}
    resume_path = Path(config.output_dir) / RESUME_FILE
    for pset in sets:
        try:
            ev = evaluate_set(provider, pset, cache=cache, config=ecfg)
        except PartialRunError as exc:
            _write_resume(resume_path, exc, config)
            raise
        for key in totals:
            totals[key] += getattr(ev.ledger, key)
    resume_path.unlink(missing_ok=True)
    return totals


def _write_resume(path: Path, exc: PartialRunError, config: RunConfig) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "set_id": exc.set_id,
        "completed_cells": [list(c) for c in exc.completed],
        "cache": str(config.cache_path),
        "config_digest": config.digest(),
        "message": str(exc),
    }
    path.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def stage_posix(config: RunConfig) -> dict:
    """Compute psi, factors and POSIX from cached backend results only."""
    check_credentials(config)
    sets = _load_or_build_sets(config)
    model = provider_id_for(config.provider)
    provider = CacheOnlyProvider(model)
    cache = ScoreCache(config.cache_path)
    ecfg = _eval_config(config, build_embedder(config.embedder))
    records = []
    for pset in sets:
        try:
            ev = evaluate_set(provider, pset, cache=cache, config=ecfg)
        except PartialRunError as exc:
            if isinstance(exc.cause, CacheMissError):
                raise CacheMissError(f"{pset.set_id}: {exc.cause}") from exc
            raise
        records.append(ReportRecord.from_evaluation(ev, model))
    out = Path(config.output_dir)
    write_records(out / RECORDS_FILE, records)

    summary = {}
    for vt in config.types:
        scores = [
            SensitivityScore(r.psi if r.psi is not None else float("nan"), r.n, r.degenerate, f"{r.base_id}/{vt.value}")
            for r in records
            if r.variation_type == vt.value
        ]
        if not scores:
            continue
        entry = {"degenerate": [s.set_id for s in scores if s.degenerate]}
        if any(not s.degenerate for s in scores):
            res = compute_posix(scores)
            entry.update(posix=res.posix, m=res.m)
        summary[vt.value] = entry
    (out / POSIX_FILE).write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return {"records": len(records), "posix": {k: v.get("posix") for k, v in summary.items()}}


def stage_report(config: RunConfig) -> dict:
    out = Path(config.output_dir)
    path = out / RECORDS_FILE
    if not path.exists():
        raise NoDataError(f"{path} not found; run the posix stage first")
    records = read_records(path)
    if not records:
        raise NoDataError(f"{path} is empty")
    rows = write_aggregate(records, out / AGGREGATE_FILE)
    emit_plot_data(records, config.bin_count, out)
    ids = {"scoring": provider_id_for(config.provider)}
    emb = build_embedder(config.embedder)
    ids["embedder"] = getattr(emb, "provider_id", config.embedder.get("type"))
    extra = {
        "n_records": len(records),
        "degenerate_sets": sorted(f"{r.base_id}/{r.variation_type}" for r in records if r.degenerate),
        "exclusions": sorted(load_exclusions(config.exclude)),
        "ledger": {
            key: sum(r.ledger.get(key, 0) for r in records)
            for key in ("generate_calls", "score_calls", "cache_hits", "clamped_entries", "self_check_calls")
        },
    }
    write_manifest(out / MANIFEST_FILE, config, ids, extra)
    return {"aggregate_rows": len(rows)}


def stage_run(config: RunConfig) -> dict:
    check_credentials(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    result = {"variants": stage_variants(config)}
    result["score"] = stage_score(config)
    result["posix"] = stage_posix(config)
    result["report"] = stage_report(config)
    run_log = {
        "started_at": started,
        "finished_at": time.time(),
        "package_version": __version__,
        "score_stage": result["score"],
    }
    (out / RUN_LOG_FILE).write_text(json.dumps(run_log, indent=1) + "\n", encoding="utf-8")
    return result


STAGES = {
    "variants": stage_variants,
    "score": stage_score,
    "posix": stage_posix,
    "report": stage_report,
    "run": stage_run,
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config (or bundled:smoke)")
    p.add_argument("--dataset", help="line-delimited JSON records")
    p.add_argument("--mode", choices=["mcq", "open-ended"])
    p.add_argument("--types", help="comma-separated variation types (spelling,template,paraphrase,mixture)")
    p.add_argument("--max-new-tokens", type=int)
    p.add_argument("--few-shot", type=int)
    p.add_argument("--mixture-seed", type=int)
    p.add_argument("--bin-count", type=int)
    p.add_argument("--in-flight", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--cache", help="score cache file (default <output-dir>/cache.jsonl)")
    p.add_argument("--templates", help="template file replacing the built-in set")
    p.add_argument("--paraphrase-cache", help="JSON file of record id -> paraphrases")
    p.add_argument("--exclude", help="file of record ids to skip, one per line")
    p.add_argument("-v", "--verbose", action="store_true")


class _Parser(argparse.ArgumentParser):
    """Usage errors become the same one-line JSON as every other failure."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.exit(_fail(ConfigError(f"{self.prog}: {message}")))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="posix-index", description="Prompt sensitivity index (POSIX) pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "variants": "build intent-aligned prompt sets",
        "score": "run generations and cross scores into the cache",
        "posix": "compute psi, factors and POSIX from the cache",
        "report": "write the aggregate table, plot data and manifest",
        "run": "all stages",
    }
    for name, text in helps.items():
        _add_config_flags(sub.add_parser(name, help=text))
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "dataset": args.dataset,
        "mode": args.mode,
        "variation_types": [t.strip() for t in args.types.split(",") if t.strip()] if args.types else None,
        "max_new_tokens": args.max_new_tokens,
        "few_shot": args.few_shot,
        "mixture_seed": args.mixture_seed,
        "bin_count": args.bin_count,
        "in_flight": args.in_flight,
        "output_dir": args.output_dir,
        "cache": args.cache,
        "templates": args.templates,
        "paraphrase_cache": args.paraphrase_cache,
        "exclude": args.exclude,
    }
    if args.config:
        return RunConfig.from_file(args.config, overrides)
    return RunConfig.from_dict({k: v for k, v in overrides.items() if v is not None})


def _fail(exc: PosixError) -> int:
    line = {"error": type(exc).__name__, "exit_code": exc.exit_code, "message": str(exc)}
    print(json.dumps(line), file=sys.stderr)
    return exc.exit_code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors, --help, --version
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = config_from_args(args)
        result = STAGES[args.command](config)
    except PosixError as exc:
        return _fail(exc)
    except OSError as exc:
        return _fail(DataError(f"{type(exc).__name__}: {exc}"))
    print(json.dumps({"command": args.command, "output_dir": config.output_dir, **result}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
