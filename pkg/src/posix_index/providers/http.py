"""HTTP adapters for remote scoring, embedding and paraphrase backends.

Wire contracts
--------------
Native scoring backend::

    POST /v1/score     {"prompt": str, "response_tokens": [int]}
                       -> {"token_logprobs": [float], "tokens": [int]}
    POST /v1/generate  {"prompt": str, "max_new_tokens": int, "decoding": "greedy"}
                       -> {"tokens": [...], "text": str, "token_logprobs": [float]}

Echo-completions backend (OpenAI-style ``/v1/completions``). Fields read
from the response:

    choices[0].text                       generated text (generation only)
    choices[0].logprobs.tokens            token strings
    choices[0].logprobs.token_logprobs    natural-log probability per token;
                                          ``null`` (first prompt token) is
                                          read as -inf and floored later

Embeddings::

    POST /v1/embeddings {"input": str} -> {"vector": [float]}

Paraphrases use a chat-completions request whose instruction text comes
from configuration; ``choices[0].message.content`` is split into one
paraphrase per non-empty line.
"""
from __future__ import annotations

import logging
import os
import re
import threading
import time
from typing import Any, Sequence

import httpx
import numpy as np

from ..errors import BoundaryError, CredentialError, ProviderError
from .base import GenerationResult, ScoreResult

log = logging.getLogger(__name__)

RETRY_STATUSES = frozenset({408, 429, 500, 502, 503, 504})
DEFAULT_MAX_IN_FLIGHT = 8

DEFAULT_PARAPHRASE_INSTRUCTION = (
    "Rewrite the user's question in {n} different ways. Every rewrite must keep the "
    "original intent and meaning. Output one rewrite per line with no numbering."
)


def resolve_api_key(env_name: str | None) -> str | None:
    """Read the credential from the named environment variable.

    Raises ``CredentialError`` when a variable is named but unset, so callers
    fail before sending any request.
    """
    if not env_name:
        return None
    value = os.environ.get(env_name)
    if not value:
        raise CredentialError(f"environment variable {env_name} is not set")
    return value


class HTTPBackend:
    """Shared JSON-over-HTTP plumbing: auth header, retries, in-flight cap."""

    def __init__(
        self,
        base_url: str,
        api_key_env: str | None = None,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff: float = 0.5,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        transport: httpx.BaseTransport | None = None,
    ):
        api_key = resolve_api_key(api_key_env)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.base_url = base_url.rstrip("/")
        self.max_attempts = max(1, max_attempts)
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(base_url=self.base_url, headers=headers, timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def post(self, path: str, payload: dict) -> Any:
        last_status = None
        last_exc: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                with self._slots:
                    resp = self._client.post(path, json=payload)
                if resp.status_code in RETRY_STATUSES:
                    last_status = resp.status_code
                    last_exc = None
                else:
                    resp.raise_for_status()
                    return resp.json()
            except httpx.HTTPStatusError as exc:
                raise ProviderError(
                    f"POST {path} failed with HTTP {exc.response.status_code}",
                    attempts=attempt,
                    last_status=exc.response.status_code,
                ) from exc
            except (httpx.TransportError, ValueError) as exc:
                last_exc = exc
            if attempt < self.max_attempts:
                delay = self.backoff * 2 ** (attempt - 1)
                log.debug("POST %s attempt %d failed, retrying in %.2fs", path, attempt, delay)
                time.sleep(delay)
        detail = f"HTTP {last_status}" if last_exc is None else repr(last_exc)
        raise ProviderError(
            f"POST {path} failed after {self.max_attempts} attempts: {detail}",
            attempts=self.max_attempts,
            last_status=last_status,
        ) from last_exc


def _field(data: Any, *path) -> Any:
    try:
        for key in path:
            data = data[key]
    except (KeyError, IndexError, TypeError):
        raise ProviderError(f"malformed backend response: missing {'.'.join(map(str, path))}") from None
    return data


def _logprobs(values: Sequence) -> list[float]:
    return [float("-inf") if v is None else float(v) for v in values]


class NativeScoringProvider:
    """Backend that exposes ``/v1/score`` and ``/v1/generate`` directly."""

    def __init__(self, base_url: str, provider_id: str | None = None, **http_kwargs):
        self.http = HTTPBackend(base_url, **http_kwargs)
        self.provider_id = provider_id or f"native:{self.http.base_url}"

    def generate(self, prompt: str, max_new_tokens: int) -> GenerationResult:
        data = self.http.post(
            "/v1/generate", {"prompt": prompt, "max_new_tokens": max_new_tokens, "decoding": "greedy"}
        )
        return GenerationResult(
            tokens=tuple(_field(data, "tokens")),
            text=_field(data, "text"),
            token_logprobs=tuple(_logprobs(_field(data, "token_logprobs"))),
        )

    def score(self, prompt: str, response_tokens: Sequence) -> ScoreResult:
        tokens = list(response_tokens)
        data = self.http.post("/v1/score", {"prompt": prompt, "response_tokens": tokens})
        returned = _field(data, "tokens")
        if list(returned) != tokens:
            mismatch = next((i for i, (a, b) in enumerate(zip(returned, tokens)) if a != b), min(len(returned), len(tokens)))
            raise BoundaryError(
                f"backend echoed different response tokens (first mismatch at {mismatch})",
                prompt_tokens=0,
                mismatch_at=mismatch,
            )
        return ScoreResult(tuple(_logprobs(_field(data, "token_logprobs"))))


class EchoCompletionsProvider:
    """Teacher forcing through a completions endpoint with ``echo`` support.

    Tokens are the backend's token strings. Scoring sends prompt+response
    with zero new tokens and slices off the prompt part, after checking that
    the prompt alone tokenizes to the same prefix.
    """

    def __init__(self, base_url: str, model: str, provider_id: str | None = None, **http_kwargs):
        self.http = HTTPBackend(base_url, **http_kwargs)
        self.model = model
        self.provider_id = provider_id or f"echo:{self.http.base_url}:{model}"
        self._prompt_tokens: dict[str, list[str]] = {}
        self._lock = threading.Lock()

    def _echo(self, text: str) -> tuple[list[str], list[float]]:
        data = self.http.post(
            "/v1/completions",
            {"model": self.model, "prompt": text, "max_tokens": 0, "echo": True, "logprobs": 1, "temperature": 0},
        )
        lp = _field(data, "choices", 0, "logprobs")
        tokens = list(_field(lp, "tokens"))
        values = _logprobs(_field(lp, "token_logprobs"))
        if len(tokens) != len(values):
            raise ProviderError("echo response has mismatched tokens/token_logprobs lengths")
        return tokens, values

    def tokenize_prompt(self, prompt: str) -> list[str]:
        with self._lock:
            cached = self._prompt_tokens.get(prompt)
        if cached is None:
            cached, _ = self._echo(prompt)
            with self._lock:
                self._prompt_tokens[prompt] = cached
        return cached

    def generate(self, prompt: str, max_new_tokens: int) -> GenerationResult:
        data = self.http.post(
            "/v1/completions",
            {"model": self.model, "prompt": prompt, "max_tokens": max_new_tokens, "temperature": 0, "logprobs": 1},
        )
        choice = _field(data, "choices", 0)
        lp = _field(choice, "logprobs")
        return GenerationResult(
            tokens=tuple(_field(lp, "tokens")),
            text=_field(choice, "text"),
            token_logprobs=tuple(_logprobs(_field(lp, "token_logprobs"))),
        )

    def score(self, prompt: str, response_tokens: Sequence[str]) -> ScoreResult:
        prefix = self.tokenize_prompt(prompt)
        full, values = self._echo(prompt + "".join(response_tokens))
        n = len(prefix)
        for i, tok in enumerate(prefix):
            if i >= len(full) or full[i] != tok:
                raise BoundaryError(
                    f"prompt re-tokenized differently at token {i} of {n}", prompt_tokens=n, mismatch_at=i
                )
        tail = full[n:]
        if tail != list(response_tokens):
            mismatch = next(
                (i for i, (a, b) in enumerate(zip(tail, response_tokens)) if a != b),
                min(len(tail), len(response_tokens)),
            )
            raise BoundaryError(
                f"response re-tokenized differently at response token {mismatch}",
                prompt_tokens=n,
                mismatch_at=n + mismatch,
            )
        return ScoreResult(tuple(values[n:]))


class HTTPEmbedder:
    def __init__(self, base_url: str, provider_id: str | None = None, **http_kwargs):
        self.http = HTTPBackend(base_url, **http_kwargs)
        self.provider_id = provider_id or f"embed:{self.http.base_url}"

    def embed(self, text: str) -> np.ndarray:
        data = self.http.post("/v1/embeddings", {"input": text})
        return np.asarray(_field(data, "vector"), dtype=np.float64)


_LIST_MARKER = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


class ChatParaphraser:
    """Paraphrase provider backed by a chat-completions endpoint."""

    def __init__(
        self,
        base_url: str,
        model: str,
        instruction: str = DEFAULT_PARAPHRASE_INSTRUCTION,
        temperature: float = 1.0,
        **http_kwargs,
    ):
        self.http = HTTPBackend(base_url, **http_kwargs)
        self.model = model
        self.instruction = instruction
        self.temperature = temperature

    def paraphrase(self, question: str, n: int) -> list[str]:
        data = self.http.post(
            "/v1/chat/completions",
            {
                "model": self.model,
                "temperature": self.temperature,
                "messages": [
                    {"role": "system", "content": self.instruction.format(n=n)},
                    {"role": "user", "content": question},
                ],
            },
        )
        content = _field(data, "choices", 0, "message", "content")
        lines = (_LIST_MARKER.sub("", line).strip() for line in content.splitlines())
        return [line for line in lines if line]
