import csv
import json
from pathlib import Path

import jsonschema
import pytest

from posix_index import cli
from posix_index.config import RunConfig, bundled_path, load_dataset
from posix_index.errors import ConfigError, InvalidInputError, NoDataError, ProviderError
from posix_index.report import ReportRecord, emit_plot_data

REPORT_FILES = ("records.jsonl", "aggregate.csv", "binned.csv", "correlations.csv", "quartiles.csv", "manifest.json", "posix.json")
SCHEMA = json.loads((Path(cli.__file__).parent / "schemas" / "report_record.schema.json").read_text())


def run(args, capsys):
    code = cli.main(args)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def smoke_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    assert cli.main(["run", "--config", "bundled:smoke", "--output-dir", str(out)]) == 0
    return out


def read_csv(path):
    lines = [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def test_smoke_run(smoke_dir):
    rows = read_csv(smoke_dir / "aggregate.csv")
    assert [r["variation_type"] for r in rows] == ["spelling", "template", "paraphrase", "mixture"]
    assert list(rows[0]) == ["variation_type", "posix_mean", "posix_std", "n_sets", "q_min", "q1", "median", "q3", "q_max"]
    assert all(int(r["n_sets"]) == 3 and float(r["posix_mean"]) > 0 for r in rows)


def test_records_validate_against_schema(smoke_dir):
    lines = (smoke_dir / "records.jsonl").read_text().splitlines()
    assert len(lines) == 12
    for line in lines:
        jsonschema.validate(json.loads(line), SCHEMA)


def test_schema_psi_iff_not_degenerate():
    rec = ReportRecord("b", "spelling", 21, True, None, None, {"generate_calls": 0, "score_calls": 0, "cache_hits": 0, "clamped_entries": 0})
    jsonschema.validate(rec.to_dict(), SCHEMA)
    bad = dict(rec.to_dict(), psi=0.1)
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(bad, SCHEMA)


def test_report_files_byte_identical(smoke_dir, tmp_path):
    assert cli.main(["run", "--config", "bundled:smoke", "--output-dir", str(tmp_path)]) == 0
    for name in REPORT_FILES:
        assert (tmp_path / name).read_bytes() == (smoke_dir / name).read_bytes(), name
    log = json.loads((tmp_path / "run_log.json").read_text())
    assert "started_at" in log and "finished_at" in log


def test_manifest_contents(smoke_dir):
    m = json.loads((smoke_dir / "manifest.json").read_text())
    assert m["few_shot"] == 0 and m["bin_count"] == 20 and m["max_new_tokens"] == 5
    assert m["provider_ids"]["scoring"].startswith("reference-bigram:")
    assert len(m["config_digest"]) == 64
    assert (smoke_dir / "binned.csv").read_text().startswith("# bin_count=20\n")


def test_few_shot_changes_psi(smoke_dir, tmp_path):
    assert cli.main(["run", "--config", "bundled:smoke", "--few-shot", "1", "--output-dir", str(tmp_path)]) == 0
    psi0 = [json.loads(l).get("psi") for l in (smoke_dir / "records.jsonl").read_text().splitlines()]
    psi1 = [json.loads(l).get("psi") for l in (tmp_path / "records.jsonl").read_text().splitlines()]
    assert psi0 != psi1
    assert json.loads((tmp_path / "manifest.json").read_text())["few_shot"] == 1


def test_stages_one_by_one(smoke_dir, tmp_path, capsys):
    base = ["--config", "bundled:smoke", "--output-dir", str(tmp_path)]
    assert run(["posix", *base], capsys)[0] == 4  # empty cache
    for stage in ("variants", "score", "posix", "report"):
        code, out, err = run([stage, *base], capsys)
        assert code == 0, err
    code, out, _ = run(["score", *base], capsys)
    assert json.loads(out)["generate_calls"] == 0 and json.loads(out)["score_calls"] == 0
    for name in REPORT_FILES:
        assert (tmp_path / name).read_bytes() == (smoke_dir / name).read_bytes(), name


def test_types_flag_and_open_ended(tmp_path):
    args = ["run", "--config", "bundled:smoke", "--dataset", "bundled:smoke/open_ended.jsonl", "--mode", "open-ended",
            "--types", "template,paraphrase", "--output-dir", str(tmp_path)]
    assert cli.main(args) == 0
    rows = read_csv(tmp_path / "aggregate.csv")
    assert [r["variation_type"] for r in rows] == ["template", "paraphrase"]
    assert json.loads((tmp_path / "manifest.json").read_text())["max_new_tokens"] == 30


def test_exclusions(tmp_path):
    ex = tmp_path / "exclude.txt"
    ex.write_text("# flagged\nsci1\n")
    assert cli.main(["run", "--config", "bundled:smoke", "--exclude", str(ex), "--output-dir", str(tmp_path / "o")]) == 0
    ids = {json.loads(l)["base_id"] for l in (tmp_path / "o" / "records.jsonl").read_text().splitlines()}
    assert ids == {"geo1", "his1"}
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["exclusions"] == ["sci1"]


def test_missing_credential_exit_2(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("POSIX_TEST_NO_KEY", raising=False)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "dataset": str(bundled_path("smoke/dataset.jsonl")),
        "provider": {"type": "echo", "base_url": "http://127.0.0.1:9", "model": "m", "api_key_env": "POSIX_TEST_NO_KEY"},
    }))
    code, out, err = run(["run", "--config", str(cfg), "--output-dir", str(tmp_path / "o")], capsys)
    assert code == 2
    line = json.loads(err.strip().splitlines()[-1])
    assert line == {"error": "CredentialError", "exit_code": 2, "message": "environment variable POSIX_TEST_NO_KEY is not set"}
    assert not (tmp_path / "o" / "cache.jsonl").exists()


def test_error_lines_and_codes(tmp_path, capsys):
    code, _, err = run(["run", "--dataset", str(tmp_path / "missing.jsonl"), "--output-dir", str(tmp_path)], capsys)
    assert code == 4 and json.loads(err.strip())["error"] == "DataError"
    code, _, err = run(["run", "--config", "bundled:smoke", "--max-new-tokens", "0"], capsys)
    assert code == 2 and json.loads(err.strip())["error"] == "ConfigError"
    code, _, err = run(["run", "--mode", "bogus"], capsys)
    assert code == 2 and json.loads(err.strip().splitlines()[-1])["exit_code"] == 2


def test_partial_run_writes_resume(tmp_path, capsys, monkeypatch):
    from posix_index import config as config_mod

    real = config_mod.build_provider

    class Flaky:
        def __init__(self, inner):
            self.inner, self.provider_id, self.calls = inner, inner.provider_id, 0

        def generate(self, prompt, n):
            return self.inner.generate(prompt, n)

        def score(self, prompt, tokens):
            self.calls += 1
            if self.calls > 100:
                raise ProviderError("backend went away")
            return self.inner.score(prompt, tokens)

    monkeypatch.setattr(cli, "build_provider", lambda spec: Flaky(real(spec)))
    base = ["--config", "bundled:smoke", "--output-dir", str(tmp_path), "--in-flight", "1"]
    code, _, err = run(["score", *base], capsys)
    assert code == 5 and json.loads(err.strip())["error"] == "PartialRunError"
    resume = json.loads((tmp_path / "resume.json").read_text())
    assert resume["set_id"] == "geo1/spelling" and len(resume["completed_cells"]) == 21 + 100

    monkeypatch.setattr(cli, "build_provider", real)
    assert run(["score", *base], capsys)[0] == 0
    assert not (tmp_path / "resume.json").exists()


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset": "d.jsonl", "few_shot": 2, "bin_count": 7}))
    rc = RunConfig.from_file(cfg, {"bin_count": 9, "few_shot": None})
    assert rc.few_shot == 2 and rc.bin_count == 9
    assert rc.dataset == str(tmp_path / "d.jsonl")
    assert RunConfig().budget == 5 and RunConfig(mode="open-ended").budget == 30
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"datset": "typo"})
    with pytest.raises(ConfigError):
        RunConfig(variation_types=[])
    with pytest.raises(ConfigError):
        RunConfig(few_shot=-1)


def test_load_dataset(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text(
        '{"id":"q1","question":"2+2?","options":["1","2","3","4"],"subject":"math"}\n'
        '{"id":"a1","question":"Describe the best way to store fresh berries."}\n'
    )
    q, a = load_dataset(p)
    assert q.is_mcq and q.subject == "math" and not a.is_mcq
    p.write_text('{"id":"q1","question":"x?"}\n{"id":"q1","question":"y?"}\n')
    with pytest.raises(InvalidInputError, match="duplicate id 'q1'"):
        load_dataset(p)
    p.write_text('{"id":"q1","question":"x?"}\nnot json\n')
    with pytest.raises(InvalidInputError, match=":2:"):
        load_dataset(p)
    p.write_text('{"id":"q1","question":"x?","options":["a","b"]}\n')
    with pytest.raises(InvalidInputError):
        load_dataset(p)


def rec(vt, psi, factors=None, base="b", degenerate=False):
    return ReportRecord(base, vt, 21, degenerate, None if degenerate else psi, factors, {})


def test_emit_plot_data(tmp_path):
    f = lambda d: {"diversity": d, "entropy": 0.5, "coherence": 0.1 * d, "confidence_variance": 0.2}
    records = [rec(vt, 0.1 * (i + 1), f(i + 1), base=f"b{i}") for i, vt in enumerate(["spelling", "template", "paraphrase", "mixture"])]
    emit_plot_data(records, 20, tmp_path)
    assert len(read_csv(tmp_path / "quartiles.csv")) == 4
    corr = {r["factor"]: r for r in read_csv(tmp_path / "correlations.csv")}
    assert corr["entropy"]["status"] == "undefined" and corr["entropy"]["spearman"] == ""
    assert corr["diversity"]["status"] == "ok" and float(corr["diversity"]["spearman"]) == pytest.approx(1.0)
    assert (tmp_path / "binned.csv").read_text().splitlines()[0] == "# bin_count=20"
    with pytest.raises(NoDataError):
        emit_plot_data([], 20, tmp_path)
