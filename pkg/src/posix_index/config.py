"""Run configuration, dataset ingestion and backend construction."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import ConfigError, DataError, InvalidInputError
from .providers.bigram import ReferenceBigramLM
from .providers.embedding import DEFAULT_BUCKETS, HashedTrigramEmbedder
from .providers.http import (
    ChatParaphraser,
    EchoCompletionsProvider,
    HTTPEmbedder,
    NativeScoringProvider,
    resolve_api_key,
)
from .variants.sets import PromptRecord, VariationType

MODES = ("mcq", "open-ended")
DEFAULT_BUDGET = {"mcq": 5, "open-ended": 30}
BUNDLED_PREFIX = "bundled:"
PATH_FIELDS = ("dataset", "cache", "output_dir", "paraphrase_cache", "templates", "exclude")


@dataclass
class RunConfig:
    dataset: str | None = None
    mode: str = "mcq"
    variation_types: list[str] = field(default_factory=lambda: [v.value for v in VariationType])
    max_new_tokens: int | None = None
    few_shot: int = 0
    mixture_seed: int = 0
    bin_count: int = 20
    in_flight: int = 8
    output_dir: str = "posix_out"
    cache: str | None = None
    templates: str | None = None
    paraphrase_cache: str | None = None
    exclude: str | None = None
    # {"type": "reference", "path": ...} | {"type": "native", "base_url": ...}
    # | {"type": "echo", "base_url": ..., "model": ...}; HTTP types accept
    # "api_key_env", "timeout", "max_attempts", "id"
    provider: dict = field(default_factory=lambda: {"type": "reference"})
    embedder: dict = field(default_factory=lambda: {"type": "hashed-trigram"})
    paraphraser: dict | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.variation_types:
            raise ConfigError("at least one variation type must be enabled")
        for vt in self.variation_types:
            try:
                VariationType(vt)
            except ValueError:
                raise ConfigError(f"unknown variation type {vt!r}") from None
        if self.max_new_tokens is not None and self.max_new_tokens < 1:
            raise ConfigError("max_new_tokens must be >= 1")
        if self.few_shot < 0:
            raise ConfigError("few_shot must be >= 0")
        if self.bin_count < 1:
            raise ConfigError("bin_count must be >= 1")
        if self.in_flight < 1:
            raise ConfigError("in_flight must be >= 1")
        if not isinstance(self.provider, dict) or "type" not in self.provider:
            raise ConfigError("provider must be an object with a 'type'")

    @property
    def budget(self) -> int:
        return self.max_new_tokens if self.max_new_tokens is not None else DEFAULT_BUDGET[self.mode]

    @property
    def types(self) -> list[VariationType]:
        wanted = {VariationType(v) for v in self.variation_types}
        return [vt for vt in VariationType if vt in wanted]

    @property
    def cache_path(self) -> Path:
        return Path(self.cache) if self.cache else Path(self.output_dir) / "cache.jsonl"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Hash of the result-affecting settings (output location excluded)."""
        data = self.to_dict()
        for key in ("output_dir", "cache", "in_flight"):
            data.pop(key, None)
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict | None = None) -> "RunConfig":
        """Load a JSON config; relative paths resolve against the config's directory."""
        path = _resolve_bundled(str(path))
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        base = Path(path).parent
        for key in PATH_FIELDS:
            if isinstance(data.get(key), str):
                data[key] = _rebase(data[key], base)
        prov = data.get("provider")
        if isinstance(prov, dict) and isinstance(prov.get("path"), str):
            prov["path"] = _rebase(prov["path"], base)
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def _rebase(value: str, base: Path) -> str:
    if value.startswith(BUNDLED_PREFIX) or Path(value).is_absolute():
        return value
    return str(base / value)


def bundled_path(name: str) -> Path:
    """Path of a file shipped under ``posix_index/data``."""
    return Path(str(resources.files("posix_index").joinpath("data", *name.split("/"))))


def _resolve_bundled(value: str) -> str:
    if value.startswith(BUNDLED_PREFIX):
        name = value[len(BUNDLED_PREFIX):]
        if name == "smoke":
            name = "smoke/config.json"
        return str(bundled_path(name))
    return value


def load_dataset(path: str | Path) -> list[PromptRecord]:
    """Read line-delimited JSON records, validating ids and MCQ options."""
    path = Path(_resolve_bundled(str(path)))
    records = []
    seen: dict[str, int] = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise DataError(f"dataset not found: {path}") from None
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            if not isinstance(data, dict):
                raise ValueError("record is not a JSON object")
            record = PromptRecord.from_dict(data)
        except (ValueError, KeyError, TypeError) as exc:
            raise InvalidInputError(f"{path}:{lineno}: malformed record: {exc}") from None
        if record.id in seen:
            raise InvalidInputError(f"{path}:{lineno}: duplicate id {record.id!r} (first on line {seen[record.id]})")
        seen[record.id] = lineno
        records.append(record)
    if not records:
        raise DataError(f"{path}: no records")
    return records


def load_exclusions(path: str | Path | None) -> list[str]:
    if not path:
        return []
    return [l.strip() for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip() and not l.startswith("#")]


def _http_kwargs(spec: dict) -> dict[str, Any]:
    out = {}
    for key in ("api_key_env", "timeout", "max_attempts", "backoff", "max_in_flight"):
        if key in spec:
            out[key] = spec[key]
    return out


def provider_id_for(spec: dict) -> str:
    """Stable backend id for cache keys, computable without contacting the backend."""
    kind = spec.get("type")
    if spec.get("id"):
        return str(spec["id"])
    if kind == "reference":
        return load_reference_lm(spec).provider_id
    if kind == "native":
        return f"native:{spec['base_url'].rstrip('/')}"
    if kind == "echo":
        return f"echo:{spec['base_url'].rstrip('/')}:{spec['model']}"
    raise ConfigError(f"unknown provider type {kind!r}")


def load_reference_lm(spec: dict) -> ReferenceBigramLM:
    path = spec.get("path") or "bundled:smoke/reference_lm.json"
    lm = ReferenceBigramLM.from_file(_resolve_bundled(path))
    if "temperature" in spec:
        lm = lm.with_temperature(float(spec["temperature"]))
    return lm


def build_provider(spec: dict):
    kind = spec.get("type")
    try:
        if kind == "reference":
            return load_reference_lm(spec)
        pid = provider_id_for(spec)
        if kind == "native":
            return NativeScoringProvider(spec["base_url"], provider_id=pid, **_http_kwargs(spec))
        if kind == "echo":
            return EchoCompletionsProvider(spec["base_url"], spec["model"], provider_id=pid, **_http_kwargs(spec))
    except KeyError as exc:
        raise ConfigError(f"provider config missing {exc.args[0]!r}") from None
    raise ConfigError(f"unknown provider type {kind!r}")


def build_embedder(spec: dict | None):
    spec = spec or {"type": "hashed-trigram"}
    kind = spec.get("type")
    if kind == "hashed-trigram":
        return HashedTrigramEmbedder(int(spec.get("buckets", DEFAULT_BUCKETS)))
    if kind == "http":
        try:
            return HTTPEmbedder(spec["base_url"], **_http_kwargs(spec))
        except KeyError as exc:
            raise ConfigError(f"embedder config missing {exc.args[0]!r}") from None
    raise ConfigError(f"unknown embedder type {kind!r}")


def build_paraphraser(spec: dict | None):
    if not spec:
        return None
    if spec.get("type", "chat") != "chat":
        raise ConfigError(f"unknown paraphraser type {spec.get('type')!r}")
    kwargs = _http_kwargs(spec)
    if "instruction" in spec:
        kwargs["instruction"] = spec["instruction"]
    try:
        return ChatParaphraser(spec["base_url"], spec["model"], **kwargs)
    except KeyError as exc:
        raise ConfigError(f"paraphraser config missing {exc.args[0]!r}") from None


def check_credentials(config: RunConfig) -> None:
    """Fail fast on missing credential variables before any request is made."""
    for spec in (config.provider, config.embedder, config.paraphraser):
        if isinstance(spec, dict):
            resolve_api_key(spec.get("api_key_env"))
