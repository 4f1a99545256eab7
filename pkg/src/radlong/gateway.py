"""Client layer for chat-completion endpoints.

One prompt, one request, greedy decoding; replies are cached in an
append-only JSONL store keyed by (model, prompt, decoding) so corpus runs
can be interrupted and resumed without re-issuing network calls.  A
scripted mock backend stands in for the endpoint in offline tests.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import requests

logger = logging.getLogger(__name__)

# Decoding is deliberately not configurable: annotation must be reproducible,
# so every request is greedy.
GREEDY_DECODING: Mapping[str, object] = {"temperature": 0, "sampling": False}

API_KEY_ENV = "LLM_API_KEY"


class GatewayError(Exception):
    """Base for request-path failures; carries the prompt's cache key."""

    def __init__(self, message: str, cache_key: str = ""):
        super().__init__(message)
        self.cache_key = cache_key


class TransportError(GatewayError):
    """Retries exhausted against an unreachable or failing endpoint."""


class ProtocolError(GatewayError):
    """The endpoint answered with something that is not a chat completion."""


class AuthError(GatewayError):
    """The endpoint rejected the credential."""


class UnscriptedPrompt(GatewayError):
    """A mock backend received a prompt its script does not cover."""


class StoreError(Exception):
    """The cache file is unreadable or corrupt."""


def compute_cache_key(model_id: str, prompt: str) -> str:
    """Deterministic key over (model, prompt, decoding); decoding is fixed greedy."""
    payload = json.dumps(
        {"decoding": dict(GREEDY_DECODING), "model_id": model_id, "prompt": prompt},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class BackendConfig:
    """Connection settings for one OpenAI-compatible endpoint."""

    base_url: str
    model_id: str
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4
    retry_wait: float = 1.0
    prompt_suffix: str = ""

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass
class ChatExchange:
    """One prompt/reply pair, with provenance."""

    prompt: str
    raw_reply: str
    model_id: str
    cache_key: str
    latency: float = 0.0
    source: str = "network"  # network | cache | mock


class HttpBackend:
    """Synchronous client for an OpenAI-compatible ``/chat/completions`` endpoint.

    Transient transport failures (connection errors, timeouts, HTTP 5xx/429)
    are retried up to ``max_retries`` times with exponential backoff.  The
    number of concurrent in-flight requests is bounded per backend instance.
    """

    def __init__(self, config: BackendConfig, api_key: str | None = None,
                 session: requests.Session | None = None):
        self.config = config
        self._session = session or requests.Session()
        self._semaphore = threading.BoundedSemaphore(config.max_in_flight)
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")

    @property
    def model_id(self) -> str:
        return self.config.model_id

    @property
    def prompt_suffix(self) -> str:
        return self.config.prompt_suffix

    def complete(self, prompt: str) -> ChatExchange:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        key = compute_cache_key(self.config.model_id, prompt)
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        body = {
            "model": self.config.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        headers = {}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        logger.debug("request %s: %s", key[:12], json.dumps(body, ensure_ascii=False))

        start = time.monotonic()
        attempt = 0
        with self._semaphore:
            while True:
                try:
                    response = self._session.post(
                        url, json=body, headers=headers, timeout=self.config.timeout
                    )
                except requests.RequestException as exc:
                    failure = f"transport failure: {exc}"
                else:
                    if response.status_code in (401, 403):
                        raise AuthError(
                            f"credential rejected (HTTP {response.status_code})", key
                        )
                    if response.status_code == 200:
                        reply = self._extract_reply(response, key)
                        logger.debug("reply %s: %s", key[:12], reply)
                        return ChatExchange(
                            prompt=prompt,
                            raw_reply=reply,
                            model_id=self.config.model_id,
                            cache_key=key,
                            latency=time.monotonic() - start,
                            source="network",
                        )
                    if response.status_code >= 500 or response.status_code == 429:
                        failure = f"HTTP {response.status_code}"
                    else:
                        raise ProtocolError(
                            f"unexpected HTTP {response.status_code}: "
                            f"{response.text[:200]}",
                            key,
                        )
                if attempt >= self.config.max_retries:
                    raise TransportError(
                        f"giving up after {attempt + 1} attempts ({failure})", key
                    )
                wait = self.config.retry_wait * (2 ** attempt)
                logger.debug("retrying %s in %.1fs (%s)", key[:12], wait, failure)
                if wait > 0:
                    time.sleep(wait)
                attempt += 1

    @staticmethod
    def _extract_reply(response: requests.Response, key: str) -> str:
        try:
            data = response.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise ProtocolError(f"malformed completion response: {exc}", key) from exc
        if not isinstance(content, str):
            raise ProtocolError("completion content is not a string", key)
        return content


class MockBackend:
    """Scripted stand-in for an endpoint.

    The script maps prompt patterns (literal substrings or full prompts) to
    replies; the first matching pattern in insertion order wins, and an
    uncovered prompt raises :class:`UnscriptedPrompt` so test scripts must be
    exhaustive.  ``delay`` adds fixed per-call latency, useful for exercising
    interruption mid-run.
    """

    def __init__(self, script: Mapping[str, str], model_id: str = "mock",
                 prompt_suffix: str = "", delay: float = 0.0):
        self._script = list(script.items())
        self.model_id = model_id
        self.prompt_suffix = prompt_suffix
        self.delay = delay

    def complete(self, prompt: str) -> ChatExchange:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        key = compute_cache_key(self.model_id, prompt)
        if self.delay > 0:
            time.sleep(self.delay)
        for pattern, reply in self._script:
            if pattern in prompt:
                return ChatExchange(
                    prompt=prompt,
                    raw_reply=reply,
                    model_id=self.model_id,
                    cache_key=key,
                    latency=self.delay,
                    source="mock",
                )
        raise UnscriptedPrompt(f"no script entry matches prompt: {prompt!r}", key)


class CacheStore:
    """Append-only reply cache: JSONL records with an in-memory index.

    Records append with a flush per write, so a crash leaves at most one torn
    final line; that tail is discarded on reopen.  A malformed record
    anywhere else means real corruption and raises :class:`StoreError`.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[str, str] = {}
        self._load()
        self._handle = self.path.open("a", encoding="utf-8", newline="\n")

    def _load(self) -> None:
        if not self.path.exists():
            return
        try:
            raw = self.path.read_bytes()
        except OSError as exc:
            raise StoreError(f"cannot read cache {self.path}: {exc}") from exc
        if not raw:
            return
        lines = raw.split(b"\n")
        torn_tail = lines[-1] != b""  # no trailing newline: interrupted append
        complete, tail = (lines[:-1], lines[-1]) if torn_tail else (lines[:-1], b"")
        for number, line in enumerate(complete, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line.decode("utf-8"))
                self._index[record["key"]] = record["reply"]
            except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
                raise StoreError(
                    f"corrupt cache record at {self.path}:{number}: {exc}"
                ) from exc
        if torn_tail:
            logger.warning(
                "dropping torn trailing record (%d bytes) in %s", len(tail), self.path
            )
            with self.path.open("r+b") as handle:
                handle.truncate(len(raw) - len(tail))

    def get(self, key: str) -> str | None:
        with self._lock:
            return self._index.get(key)

    def put(self, key: str, reply: str, model_id: str = "") -> None:
        record = {"key": key, "model_id": model_id, "reply": reply}
        line = json.dumps(record, ensure_ascii=False)
        with self._lock:
            self._handle.write(line + "\n")
            self._handle.flush()
            self._index[key] = reply

    def __len__(self) -> int:
        with self._lock:
            return len(self._index)

    def close(self) -> None:
        self._handle.close()

    def __enter__(self) -> "CacheStore":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


class MemoryStore:
    """Dict-backed stand-in for :class:`CacheStore` when no path is given."""

    def __init__(self):
        self._lock = threading.Lock()
        self._index: dict[str, str] = {}

    def get(self, key: str) -> str | None:
        with self._lock:
            return self._index.get(key)

    def put(self, key: str, reply: str, model_id: str = "") -> None:
        with self._lock:
            self._index[key] = reply

    def __len__(self) -> int:
        with self._lock:
            return len(self._index)


def cached_complete(store, backend, prompt: str) -> ChatExchange:
    """Serve ``prompt`` from the store when possible, else ask and persist.

    A hit issues no backend traffic; a miss delegates to the backend and
    persists the reply before returning it.
    """
    key = compute_cache_key(backend.model_id, prompt)
    cached = store.get(key)
    if cached is not None:
        return ChatExchange(
            prompt=prompt,
            raw_reply=cached,
            model_id=backend.model_id,
            cache_key=key,
            latency=0.0,
            source="cache",
        )
    exchange = backend.complete(prompt)
    store.put(key, exchange.raw_reply, model_id=backend.model_id)
    return exchange
