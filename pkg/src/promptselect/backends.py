"""Chat-completion backends: an OpenAI-compatible HTTP client, a deterministic
scripted backend for offline runs, and a content-addressed response cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import requests

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


class BackendError(RuntimeError):
    pass


class UnscriptedRequestError(BackendError):
    """The scripted backend has no entry for a request; never falls back silently."""


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple  # of {"role", "content"} dicts
    temperature: float = 0.0
    sample_index: int = 0

    def __post_init__(self):
        msgs = tuple(dict(m) for m in self.messages)
        object.__setattr__(self, "messages", msgs)
        if not msgs:
            raise ValueError("messages must be non-empty")
        for m in msgs:
            if m.get("role") not in ROLES or "content" not in m:
                raise ValueError(f"malformed message: {m!r}")
        if any(m["role"] == "system" for m in msgs) and msgs[0]["role"] != "system":
            raise ValueError("system message must come first")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.sample_index < 0:
            raise ValueError("sample_index must be >= 0")


@dataclass
class ChatResponse:
    text: str
    backend_id: str
    cached: bool = False


@dataclass
class DecodingConfig:
    """Decoding strategy: greedy (T=0) or self-consistency sampling."""

    mode: str = "greedy"
    temperature: float | None = None
    n_samples: int = 5

    def __post_init__(self):
        if self.mode not in ("greedy", "self_consistency"):
            raise ValueError(f"unknown decoding mode: {self.mode}")
        if self.temperature is None:
            self.temperature = 0.0 if self.mode == "greedy" else 0.5
        if self.mode == "greedy" and self.temperature != 0.0:
            raise ValueError("greedy decoding requires temperature 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


def cache_key(backend_id: str, request: ChatRequest) -> str:
    """SHA-256 over a canonical serialization of the request identity."""
    doc = {
        "backend_id": backend_id,
        "model_id": request.model_id,
        "messages": list(request.messages),
        "temperature": request.temperature,
        "sample_index": request.sample_index,
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ScriptedBackend:
    """Replays fixture responses keyed on (system, user) message content.

    Entries are matched in file order; an entry matches when its "system"
    (if present) equals the request's system message and its "user" equals
    the last user message ("user_contains" matches a substring instead).
    Entries may carry one "text" or a per-sample "texts" list indexed by
    sample_index. Unknown requests raise UnscriptedRequestError.
    """

    def __init__(self, entries, name: str = "fixture", model_id: str = "scripted"):
        self.entries = list(entries)
        self.backend_id = f"scripted:{name}"
        self.model_id = model_id
        self.calls = 0
        self.requests: list[ChatRequest] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "ScriptedBackend":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(doc["replies"], name=doc.get("name", Path(path).stem))

    def chat(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls += 1
            self.requests.append(request)
        system = next((m["content"] for m in request.messages if m["role"] == "system"), None)
        user = next((m["content"] for m in reversed(request.messages) if m["role"] == "user"), None)
        for entry in self.entries:
            if "system" in entry and entry["system"] != system:
                continue
            if "user" in entry:
                if entry["user"] != user:
                    continue
            elif "user_contains" in entry:
                if user is None or entry["user_contains"] not in user:
                    continue
            texts = entry.get("texts")
            if texts is not None:
                if request.sample_index >= len(texts):
                    raise UnscriptedRequestError(
                        f"no scripted reply for sample_index {request.sample_index}"
                    )
                return ChatResponse(texts[request.sample_index], self.backend_id)
            return ChatResponse(entry["text"], self.backend_id)
        raise UnscriptedRequestError(f"unscripted request; last user message: {user!r}")


class OpenAIBackend:
    """Minimal client for an OpenAI-compatible /chat/completions endpoint.

    The API key is read from an environment variable, never from flags.
    Transient failures (429, 5xx, timeouts) are retried with exponential
    backoff; sample_index never reaches the wire, it only keys the cache.
    """

    def __init__(self, base_url: str, model_id: str = "gpt-4",
                 api_key_env: str = "OPENAI_API_KEY", timeout: float = 60.0,
                 max_attempts: int = 3, backoff: tuple = (1.0, 2.0, 4.0),
                 extra_params: dict | None = None, session=None, sleep=time.sleep):
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.extra_params = dict(extra_params or {})
        self.session = session or requests.Session()
        self._sleep = sleep
        self.backend_id = f"openai:{self.base_url}"

    def chat(self, request: ChatRequest) -> ChatResponse:
        body = {
            "model": request.model_id,
            "messages": list(request.messages),
            "temperature": request.temperature,
            "n": 1,
        }
        body.update(self.extra_params)
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        url = f"{self.base_url}/chat/completions"
        last_error = None
        for attempt in range(self.max_attempts):
            try:
                resp = self.session.post(url, json=body, headers=headers, timeout=self.timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        text = resp.json()["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, ValueError) as exc:
                        raise BackendError(f"malformed completion response: {exc}") from exc
                    if not text:
                        raise BackendError("backend returned empty text")
                    return ChatResponse(text, self.backend_id)
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = f"HTTP {resp.status_code}"
                else:
                    raise BackendError(f"HTTP {resp.status_code}: {resp.text[:500]}")
            if attempt + 1 < self.max_attempts:
                delay = self.backoff[min(attempt, len(self.backoff) - 1)]
                logger.warning("retrying after %s (attempt %d): %s", delay, attempt + 1, last_error)
                self._sleep(delay)
        raise BackendError(f"request failed after {self.max_attempts} attempts: {last_error}")


def cached_chat(backend, cache_dir, request: ChatRequest) -> ChatResponse:
    """Serve a chat request from the on-disk cache, fetching on a miss.

    Cache entries live at {cache_dir}/{key[:2]}/{key}.json and are written
    atomically (temp file + rename). Unreadable entries count as misses.
    """
    key = cache_key(backend.backend_id, request)
    path = Path(cache_dir) / key[:2] / f"{key}.json"
    if path.exists():
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            resp = doc["response"]
            return ChatResponse(resp["text"], resp["backend_id"], cached=True)
        except (ValueError, KeyError, OSError) as exc:
            logger.warning("unreadable cache entry %s (%s); refetching", path.name, exc)
    response = backend.chat(request)
    doc = {
        "request": {
            "model_id": request.model_id,
            "messages": list(request.messages),
            "temperature": request.temperature,
            "sample_index": request.sample_index,
        },
        "response": {"text": response.text, "backend_id": response.backend_id},
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, ensure_ascii=False, indent=1)
        os.replace(tmp, path)  # atomic on POSIX; racing writers are equivalent
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return response


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    keys: list = field(default_factory=list)


class CachedBackend:
    """Wrap any backend with the disk cache; records hit/miss statistics."""

    def __init__(self, backend, cache_dir):
        self.backend = backend
        self.cache_dir = Path(cache_dir)
        self.stats = CacheStats()
        self._lock = threading.Lock()

    @property
    def backend_id(self):
        return self.backend.backend_id

    @property
    def model_id(self):
        return getattr(self.backend, "model_id", "default")

    def chat(self, request: ChatRequest) -> ChatResponse:
        response = cached_chat(self.backend, self.cache_dir, request)
        with self._lock:
            self.stats.keys.append(cache_key(self.backend.backend_id, request))
            if response.cached:
                self.stats.hits += 1
            else:
                self.stats.misses += 1
        return response
