"""Text-generation backends behind one interface: a remote HTTP
completions-style client and a deterministic scripted backend for tests,
plus bounded-concurrency batch dispatch, retries, and a disk cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import requests

from .core import SamplingParams, Strategy, canonical_json, validate

__all__ = [
    "GenerationRequest",
    "GenerationResult",
    "BackendError",
    "Timeout",
    "RateLimited",
    "MalformedResponse",
    "ScriptMiss",
    "Backend",
    "ScriptedBackend",
    "HttpBackend",
    "CachingBackend",
    "prompt_key",
    "cache_key",
    "truncate_at_stop",
]

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 5
BACKOFF_BASE_S = 0.5


class BackendError(Exception):
    retryable = False


class Timeout(BackendError):
    retryable = True


class RateLimited(BackendError):
    retryable = True


class MalformedResponse(BackendError):
    pass


class ScriptMiss(BackendError):
    """The scripted backend has no entry for a prompt; carries the prompt
    hash and an excerpt to ease fixture authoring."""

    def __init__(self, key: str, prompt: str):
        excerpt = prompt[:120].replace("\n", "\\n")
        super().__init__(f"no scripted entry for prompt {key} (prompt starts: {excerpt!r})")
        self.key = key


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    params: SamplingParams
    n_samples: int = 1


@dataclass(frozen=True)
class GenerationResult:
    texts: tuple[str, ...]
    meta: Mapping[str, str] = field(default_factory=dict)
    cache_hit: bool = False

    def __post_init__(self):
        object.__setattr__(self, "texts", tuple(self.texts))
        object.__setattr__(self, "meta", dict(self.meta))


def _check_request(request: GenerationRequest) -> None:
    if not request.prompt:
        raise ValueError("generation request has an empty prompt")
    issues = validate(request.params)
    if issues:
        raise ValueError(f"invalid sampling params: {'; '.join(issues)}")
    if request.n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {request.n_samples}")
    if request.params.strategy is Strategy.GREEDY and request.n_samples != 1:
        raise ValueError("greedy decoding is deterministic; n_samples must be 1")


def truncate_at_stop(text: str, stop_sequences: Sequence[str]) -> str:
    """Cut at the earliest stop-sequence occurrence, excluding the stop."""
    cut = len(text)
    for stop in stop_sequences:
        if not stop:
            continue
        idx = text.find(stop)
        if idx != -1 and idx < cut:
            cut = idx
    return text[:cut]


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


def cache_key(backend_id: str, request: GenerationRequest) -> str:
    payload = {
        "backend": backend_id,
        "prompt": request.prompt,
        "params": {
            "strategy": request.params.strategy.value,
            "seed": request.params.seed,
            "max_tokens": request.params.max_tokens,
            "k": request.params.k,
            "temperature": request.params.temperature,
            "stop_sequences": list(request.params.stop_sequences),
        },
        "n_samples": request.n_samples,
    }
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


class Backend(ABC):
    backend_id: str = "backend"

    @abstractmethod
    def generate(self, request: GenerationRequest) -> GenerationResult:
        """Produce n_samples completions for one request."""

    def generate_batch(
        self,
        requests_list: Sequence[GenerationRequest],
        max_in_flight: int = 4,
    ) -> list[GenerationResult | BackendError]:
        """Dispatch requests with at most max_in_flight outstanding; results
        align positionally with the inputs and per-slot failures are
        returned in place rather than aborting the batch."""
        if max_in_flight < 1:
            raise ValueError(f"max_in_flight must be >= 1, got {max_in_flight}")
        if not requests_list:
            return []

        def run_one(request: GenerationRequest) -> GenerationResult | BackendError:
            try:
                return self.generate(request)
            except BackendError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            return list(pool.map(run_one, requests_list))


class ScriptedBackend(Backend):
    """Deterministic backend for tests: each prompt maps to an ordered
    response queue; sample i under seed s returns queue[(s + i) % len]
    (greedy always returns queue[0])."""

    backend_id = "scripted"

    def __init__(self, entries: Mapping[str, Sequence[str]] | None = None):
        self._entries: dict[str, tuple[str, ...]] = {
            key: tuple(queue) for key, queue in (entries or {}).items()
        }

    def register(self, prompt: str, responses: Sequence[str]) -> str:
        """Map a prompt to its response queue; returns the prompt key."""
        if not responses:
            raise ValueError("scripted responses must be nonempty")
        key = prompt_key(prompt)
        self._entries[key] = tuple(responses)
        return key

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        """Load a script file: {"entries": {key: [responses...]}} and/or
        {"prompts": [{"prompt": ..., "responses": [...]}]}."""
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise MalformedResponse(f"cannot load script file {path}: {exc}") from None
        backend = cls()
        for key, queue in data.get("entries", {}).items():
            backend._entries[key] = tuple(queue)
        for entry in data.get("prompts", []):
            backend.register(entry["prompt"], entry["responses"])
        return backend

    def generate(self, request: GenerationRequest) -> GenerationResult:
        _check_request(request)
        key = prompt_key(request.prompt)
        queue = self._entries.get(key)
        if not queue:
            raise ScriptMiss(key, request.prompt)
        if request.params.strategy is Strategy.GREEDY:
            start = 0
        else:
            start = request.params.seed % len(queue)
        texts = tuple(
            truncate_at_stop(
                queue[(start + i) % len(queue)], request.params.stop_sequences
            )
            for i in range(request.n_samples)
        )
        return GenerationResult(
            texts=texts,
            meta={"model": "scripted", "latency_ms": "0", "prompt_key": key},
        )


class HttpBackend(Backend):
    """Client for an HTTP JSON completions-style endpoint.

    Sends {model, prompt, max_tokens, n, stop, [temperature, top_k, seed]}
    to <base_url>/completions and reads {"choices": [{"text": ...}, ...]}.
    The auth token comes from an environment variable, never configuration.
    Timeouts and rate limits retry with exponential backoff plus jitter, up
    to MAX_ATTEMPTS; other failures are fatal for the request. Sampling
    seeds are forwarded best-effort; determinism is only guaranteed by the
    scripted backend.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        auth_env: str = "RECITEQA_API_KEY",
        timeout_s: float = 60.0,
        max_attempts: int = MAX_ATTEMPTS,
        transport: Callable[[str, dict, dict, float], tuple[int, dict]] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.auth_env = auth_env
        self.timeout_s = timeout_s
        self.max_attempts = max_attempts
        self._transport = transport or self._requests_transport
        self._sleep = sleep
        self._jitter = random.Random()
        self.backend_id = f"http:{self.base_url}:{model}"

    def _requests_transport(
        self, url: str, payload: dict, headers: dict, timeout_s: float
    ) -> tuple[int, dict]:
        try:
            response = requests.post(url, json=payload, headers=headers, timeout=timeout_s)
        except requests.exceptions.Timeout as exc:
            raise Timeout(f"request to {url} timed out after {timeout_s}s") from exc
        except requests.exceptions.RequestException as exc:
            raise MalformedResponse(f"request to {url} failed: {exc}") from exc
        try:
            body = response.json()
        except ValueError:
            body = {}
        return response.status_code, body

    def _payload(self, request: GenerationRequest) -> dict:
        params = request.params
        payload = {
            "model": self.model,
            "prompt": request.prompt,
            "max_tokens": params.max_tokens,
            "n": request.n_samples,
            "stop": list(params.stop_sequences),
        }
        if params.strategy is Strategy.GREEDY:
            payload["temperature"] = 0.0
        else:
            payload["temperature"] = params.temperature
            payload["top_k"] = params.k
            payload["seed"] = params.seed
        return payload

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.auth_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def generate(self, request: GenerationRequest) -> GenerationResult:
        _check_request(request)
        url = f"{self.base_url}/completions"
        payload = self._payload(request)
        headers = self._headers()
        attempt = 0
        while True:
            attempt += 1
            started = time.monotonic()
            try:
                status, body = self._transport(url, payload, headers, self.timeout_s)
                if status == 429:
                    raise RateLimited(f"rate limited by {url}")
                if status != 200:
                    raise MalformedResponse(f"{url} returned status {status}")
                result = self._parse_body(request, body, started)
                return result
            except BackendError as exc:
                if not exc.retryable or attempt >= self.max_attempts:
                    raise
                delay = BACKOFF_BASE_S * 2 ** (attempt - 1)
                delay += self._jitter.uniform(0, delay / 2)
                logger.warning(
                    "retrying after %s (attempt %d/%d, sleeping %.2fs)",
                    exc,
                    attempt,
                    self.max_attempts,
                    delay,
                )
                self._sleep(delay)

    def _parse_body(
        self, request: GenerationRequest, body: dict, started: float
    ) -> GenerationResult:
        choices = body.get("choices")
        if not isinstance(choices, list) or len(choices) < request.n_samples:
            raise MalformedResponse(
                f"response carries {0 if not isinstance(choices, list) else len(choices)} "
                f"choices, expected {request.n_samples}"
            )
        texts = []
        for i in range(request.n_samples):
            text = choices[i].get("text") if isinstance(choices[i], dict) else None
            if not isinstance(text, str):
                raise MalformedResponse(f"choice {i} has no text field")
            texts.append(truncate_at_stop(text, request.params.stop_sequences))
        latency_ms = int((time.monotonic() - started) * 1000)
        meta = {"model": str(body.get("model", self.model)), "latency_ms": str(latency_ms)}
        usage = body.get("usage")
        if isinstance(usage, dict):
            for key in ("prompt_tokens", "completion_tokens", "total_tokens"):
                if key in usage:
                    meta[key] = str(usage[key])
        return GenerationResult(texts=tuple(texts), meta=meta)


class CachingBackend(Backend):
    """Transparent append-only disk cache around another backend.

    Entries are one JSON object per line keyed by cache_key; the first entry
    for a key wins, so retries can never install divergent values. Corrupted
    lines and cache I/O failures degrade to misses with a logged warning.
    """

    def __init__(self, inner: Backend, path: str | Path):
        self.inner = inner
        self.backend_id = inner.backend_id
        self._path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, tuple[tuple[str, ...], dict[str, str]]] = {}
        self._load()

    def _load(self) -> None:
        if not self._path.exists():
            return
        try:
            lines = self._path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            logger.warning("cannot read cache %s: %s", self._path, exc)
            return
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
                key = entry["key"]
                texts = tuple(str(t) for t in entry["texts"])
                meta = {str(k): str(v) for k, v in entry.get("meta", {}).items()}
            except (ValueError, KeyError, TypeError) as exc:
                logger.warning("skipping corrupt cache line %d in %s: %s", lineno, self._path, exc)
                continue
            self._entries.setdefault(key, (texts, meta))

    def _store(self, key: str, result: GenerationResult) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = (result.texts, dict(result.meta))
            line = canonical_json(
                {"key": key, "texts": list(result.texts), "meta": dict(result.meta)}
            )
            try:
                with self._path.open("a", encoding="utf-8") as handle:
                    handle.write(line + "\n")
            except OSError as exc:
                logger.warning("cannot append to cache %s: %s", self._path, exc)

    def generate(self, request: GenerationRequest) -> GenerationResult:
        key = cache_key(self.backend_id, request)
        with self._lock:
            hit = self._entries.get(key)
        if hit is not None:
            texts, meta = hit
            return GenerationResult(texts=texts, meta=meta, cache_hit=True)
        result = self.inner.generate(request)
        self._store(key, result)
        return result
