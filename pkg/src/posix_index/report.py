"""Serialized outputs: per-set records, aggregate table, plot data, manifest.

Files written into the output directory:

``records.jsonl``      one record per (base_id, variation_type)
``aggregate.csv``      variation_type, posix_mean, posix_std, n_sets, q_min, q1, median, q3, q_max
``quartiles.csv``      model, variation_type, n_sets, q_min, q1, median, q3, q_max
``binned.csv``         factor, bin_center, mean_psi (header line ``# bin_count=<k>``)
``correlations.csv``   factor, spearman, n, status (``ok`` or ``undefined``)
``manifest.json``      config digest, provider ids, seeds and settings
``run_log.json``       wall-clock times and call counts, kept apart so the files above are reproducible

Quartiles use inclusive linear interpolation at ranks 0, .25, .5, .75, 1 of
the sorted psi values. std is the population standard deviation.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .diagnostics import binned_means, rank_correlation
from .errors import NoDataError, UndefinedCorrelationError
from .sensitivity import aggregate
from .variants.sets import VariationType

AGGREGATE_COLUMNS = ("variation_type", "posix_mean", "posix_std", "n_sets", "q_min", "q1", "median", "q3", "q_max")
QUARTILE_COLUMNS = ("model", "variation_type", "n_sets", "q_min", "q1", "median", "q3", "q_max")
FACTORS = ("diversity", "entropy", "coherence", "confidence_variance")


@dataclass(frozen=True)
class ReportRecord:
    base_id: str
    variation_type: str
    n: int
    degenerate: bool
    psi: float | None
    factors: dict | None
    ledger: dict
    model: str = ""
    clamped_cells: int = 0

    def to_dict(self) -> dict:
        out = {
            "base_id": self.base_id,
            "variation_type": self.variation_type,
            "model": self.model,
            "n": self.n,
            "degenerate": self.degenerate,
            "factors": self.factors,
            "clamped_cells": self.clamped_cells,
            "ledger": self.ledger,
        }
        if not self.degenerate:
            out["psi"] = self.psi
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ReportRecord":
        return cls(
            base_id=data["base_id"],
            variation_type=data["variation_type"],
            n=data["n"],
            degenerate=data["degenerate"],
            psi=data.get("psi"),
            factors=data.get("factors"),
            ledger=data.get("ledger", {}),
            model=data.get("model", ""),
            clamped_cells=data.get("clamped_cells", 0),
        )

    @classmethod
    def from_evaluation(cls, ev, model: str = "") -> "ReportRecord":
        pset = ev.prompt_set
        ledger = ev.ledger.to_dict()
        ledger.pop("degenerate_sets", None)
        return cls(
            base_id=pset.base_id,
            variation_type=pset.variation_type.value,
            n=pset.n,
            degenerate=ev.degenerate,
            psi=None if ev.degenerate else ev.score.psi,
            factors=ev.factors.to_dict() if ev.factors is not None else None,
            ledger=ledger,
            model=model,
            clamped_cells=ev.matrix.clamped_cells if ev.matrix is not None else 0,
        )


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def write_records(path: Path, records: Iterable[ReportRecord]) -> None:
    path.write_text("".join(_dumps(r.to_dict()) + "\n" for r in records), encoding="utf-8")


def read_records(path: Path) -> list[ReportRecord]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(ReportRecord.from_dict(json.loads(line)))
    return out


def _csv_text(header: Sequence[str], rows: Iterable[Sequence], preamble: str = "") -> str:
    buf = io.StringIO()
    buf.write(preamble)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def _type_order(name: str) -> int:
    order = [v.value for v in VariationType]
    return order.index(name) if name in order else len(order)


def aggregate_rows(records: Sequence[ReportRecord]) -> list[tuple]:
    """One row per variation type present: POSIX (mean psi), std and quartiles."""
    if not records:
        raise NoDataError("no report records")
    rows = []
    for vt in sorted({r.variation_type for r in records}, key=_type_order):
        psis = [r.psi for r in records if r.variation_type == vt and not r.degenerate]
        if not psis:
            continue
        st = aggregate(psis)
        rows.append((vt, st.mean, st.std, len(psis), *st.quartiles))
    return rows


def quartile_rows(records: Sequence[ReportRecord]) -> list[tuple]:
    if not records:
        raise NoDataError("no report records")
    rows = []
    keys = sorted({(r.model, r.variation_type) for r in records}, key=lambda k: (k[0], _type_order(k[1])))
    for model, vt in keys:
        psis = [r.psi for r in records if r.model == model and r.variation_type == vt and not r.degenerate]
        if psis:
            st = aggregate(psis)
            rows.append((model, vt, len(psis), *st.quartiles))
    return rows


def _factor_points(records: Sequence[ReportRecord], factor: str) -> tuple[list[float], list[float]]:
    xs, ys = [], []
    for r in records:
        if r.degenerate or not r.factors:
            continue
        xs.append(float(r.factors[factor]))
        ys.append(float(r.psi))
    return xs, ys


def plot_tables(records: Sequence[ReportRecord], bin_count: int) -> tuple[list[tuple], list[tuple]]:
    """Binned (factor, center, mean psi) rows and (factor, spearman, n, status) rows."""
    if not records:
        raise NoDataError("no report records")
    bins, corrs = [], []
    for factor in FACTORS:
        xs, ys = _factor_points(records, factor)
        if not xs:
            corrs.append((factor, None, 0, "undefined"))
            continue
        for center, mean in binned_means(xs, ys, bin_count):
            bins.append((factor, center, mean))
        try:
            corrs.append((factor, rank_correlation(xs, ys), len(xs), "ok"))
        except UndefinedCorrelationError:
            corrs.append((factor, None, len(xs), "undefined"))
    return bins, corrs


def emit_plot_data(records: Sequence[ReportRecord], bin_count: int, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bins, corrs = plot_tables(records, bin_count)
    files = {
        "binned.csv": _csv_text(("factor", "bin_center", "mean_psi"), bins, f"# bin_count={bin_count}\n"),
        "correlations.csv": _csv_text(("factor", "spearman", "n", "status"), corrs),
        "quartiles.csv": _csv_text(QUARTILE_COLUMNS, quartile_rows(records)),
    }
    written = []
    for name, text in files.items():
        (out_dir / name).write_text(text, encoding="utf-8")
        written.append(out_dir / name)
    return written


def write_aggregate(records: Sequence[ReportRecord], path: Path) -> list[tuple]:
    rows = aggregate_rows(records)
    Path(path).write_text(_csv_text(AGGREGATE_COLUMNS, rows), encoding="utf-8")
    return rows


def write_manifest(path: Path, config, provider_ids: dict, extra: dict | None = None) -> dict:
    manifest = {
        "package_version": __version__,
        "config_digest": config.digest(),
        "config": {k: v for k, v in config.to_dict().items() if k not in ("output_dir", "cache")},
        "provider_ids": provider_ids,
        "seeds": {"mixture_seed": config.mixture_seed, "spelling_seeds": [0, 1, 2, 3, 4]},
        "few_shot": config.few_shot,
        "bin_count": config.bin_count,
        "max_new_tokens": config.budget,
        "mode": config.mode,
    }
    manifest.update(extra or {})
    Path(path).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
