"""Completion backends: a remote chat-completion client and record/replay fixtures."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Protocol

import httpx

from metarev.errors import BackendError, BackendUnavailable, ReplayMiss
from metarev.store import CallRecord

log = logging.getLogger(__name__)

API_KEY_ENV = "METAREV_API_KEY"
RETRYABLE_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    model_id: str
    temperature: float = 0.0
    max_tokens: int = 2048
    request_tag: str = ""

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt is empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    usage: Mapping[str, int] = field(default_factory=dict)
    latency: float = 0.0
    backend_id: str = ""
    truncated: bool = False


def request_key(request: CompletionRequest) -> str:
    """Content hash of the fields that determine a completion; the tag is not one of them."""
    payload = json.dumps(
        {"prompt": request.prompt, "model_id": request.model_id, "temperature": float(request.temperature)},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Backend(Protocol):
    backend_id: str

    def complete(self, request: CompletionRequest) -> CompletionResult: ...


class RateLimiter:
    """Caps in-flight requests and request starts per rolling minute."""

    def __init__(
        self,
        concurrency: int = 4,
        requests_per_minute: Optional[float] = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        self._slots = threading.BoundedSemaphore(concurrency)
        self._rpm = requests_per_minute
        self._starts: deque[float] = deque()
        self._lock = threading.Lock()
        self._clock = clock
        self._sleep = sleep

    def _wait_for_budget(self) -> None:
        if not self._rpm:
            return
        while True:
            with self._lock:
                now = self._clock()
                while self._starts and now - self._starts[0] >= 60.0:
                    self._starts.popleft()
                if len(self._starts) < self._rpm:
                    self._starts.append(now)
                    return
                wait = 60.0 - (now - self._starts[0])
            self._sleep(max(wait, 0.001))

    def __enter__(self) -> RateLimiter:
        self._slots.acquire()
        try:
            self._wait_for_budget()
        except BaseException:
            self._slots.release()
            raise
        return self

    def __exit__(self, *exc: Any) -> None:
        self._slots.release()


class RemoteBackend:
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint.

    Retries 429, 5xx and transport errors with capped exponential backoff,
    honouring a numeric ``Retry-After`` header.
    """

    def __init__(
        self,
        base_url: str,
        api_key: Optional[str] = None,
        *,
        max_retries: int = 5,
        backoff_base: float = 1.0,
        backoff_cap: float = 60.0,
        timeout: float = 120.0,
        limiter: Optional[RateLimiter] = None,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.backend_id = f"remote:{self.base_url}"
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.limiter = limiter or RateLimiter()
        self._sleep = sleep
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _delay(self, attempt: int, response: Optional[httpx.Response]) -> float:
        if response is not None:
            retry_after = response.headers.get("retry-after")
            if retry_after:
                try:
                    return min(self.backoff_cap, max(0.0, float(retry_after)))
                except ValueError:
                    pass
        return min(self.backoff_cap, self.backoff_base * 2**attempt)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        body = {
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        url = f"{self.base_url}/chat/completions"
        last_error = "no attempt made"
        for attempt in range(self.max_retries + 1):
            response = None
            started = time.monotonic()
            try:
                with self.limiter:
                    response = self._client.post(url, json=body)
            except httpx.TransportError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if response.status_code == 200:
                    return self._parse(response, time.monotonic() - started)
                last_error = f"HTTP {response.status_code}: {response.text[:200]}"
                if response.status_code not in RETRYABLE_STATUS:
                    raise BackendUnavailable(last_error)
            if attempt < self.max_retries:
                delay = self._delay(attempt, response)
                log.warning("completion attempt %d failed (%s); retrying in %.1fs", attempt + 1, last_error, delay)
                self._sleep(delay)
        raise BackendUnavailable(f"giving up after {self.max_retries + 1} attempts: {last_error}")

    def _parse(self, response: httpx.Response, latency: float) -> CompletionResult:
        try:
            data = response.json()
            choice = data["choices"][0]
            text = choice["message"].get("content") or ""
        except (ValueError, KeyError, IndexError, TypeError, AttributeError) as exc:
            raise BackendError(f"malformed completion response: {exc}") from None
        truncated = choice.get("finish_reason") == "length"
        if not text and not truncated:
            log.warning("empty completion without truncation from %s", self.backend_id)
        usage = {k: int(v) for k, v in (data.get("usage") or {}).items() if isinstance(v, int)}
        return CompletionResult(text, usage, latency, self.backend_id, truncated)


def fixture_path(directory: str | Path, key: str) -> Path:
    return Path(directory) / f"{key}.json"


def write_fixture(directory: str | Path, request: CompletionRequest, result: CompletionResult | str) -> Path:
    if isinstance(result, str):
        result = CompletionResult(result)
    key = request_key(request)
    payload = {
        "key": key,
        "model_id": request.model_id,
        "temperature": float(request.temperature),
        "request_tag": request.request_tag,
        "prompt_sha256": hashlib.sha256(request.prompt.encode("utf-8")).hexdigest(),
        "prompt_head": request.prompt[:160],
        "completion": result.text,
        "truncated": result.truncated,
        "usage": dict(result.usage),
    }
    path = fixture_path(directory, key)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)
    return path


class ReplayBackend:
    """Serves recorded completions; any unrecorded request is a :class:`ReplayMiss`."""

    backend_id = "replay"

    def __init__(self, fixtures_dir: str | Path) -> None:
        self.fixtures_dir = Path(fixtures_dir)
        if not self.fixtures_dir.is_dir():
            raise FileNotFoundError(f"fixtures directory not found: {self.fixtures_dir}")

    def lookup(self, key: str) -> Optional[CompletionResult]:
        path = fixture_path(self.fixtures_dir, key)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        return CompletionResult(
            text=payload["completion"],
            usage=payload.get("usage", {}),
            latency=0.0,
            backend_id=self.backend_id,
            truncated=bool(payload.get("truncated", False)),
        )

    def complete(self, request: CompletionRequest) -> CompletionResult:
        key = request_key(request)
        result = self.lookup(key)
        if result is None:
            raise ReplayMiss(key)
        return result


class RecordingBackend:
    """Replays known requests and records new ones from ``inner``."""

    def __init__(self, inner: Backend, fixtures_dir: str | Path) -> None:
        self.inner = inner
        self.fixtures_dir = Path(fixtures_dir)
        self.fixtures_dir.mkdir(parents=True, exist_ok=True)
        self._replay = ReplayBackend(self.fixtures_dir)
        self.backend_id = f"record:{inner.backend_id}"

    def complete(self, request: CompletionRequest) -> CompletionResult:
        hit = self._replay.lookup(request_key(request))
        if hit is not None:
            return hit
        result = self.inner.complete(request)
        write_fixture(self.fixtures_dir, request, result)
        return result


class Gateway:
    """Issues completions for pipeline steps and logs every call.

    ``fork()`` returns a gateway sharing the backend but with its own call
    log, which is how per-sample provenance is kept apart under concurrency.
    """

    def __init__(self, backend: Backend, model_id: str, temperature: float = 0.0, max_tokens: int = 2048) -> None:
        self.backend = backend
        self.model_id = model_id
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.calls: list[CallRecord] = []
        self._lock = threading.Lock()

    def fork(self) -> Gateway:
        return Gateway(self.backend, self.model_id, self.temperature, self.max_tokens)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        result = self.backend.complete(request)
        record = CallRecord(
            tag=request.request_tag,
            key=request_key(request),
            prompt=request.prompt,
            completion=result.text,
            model_id=request.model_id,
            truncated=result.truncated,
        )
        with self._lock:
            self.calls.append(record)
        return result

    def ask(self, prompt: str, tag: str) -> CompletionResult:
        return self.complete(
            CompletionRequest(prompt, self.model_id, self.temperature, self.max_tokens, request_tag=tag)
        )

    @property
    def n_calls(self) -> int:
        return len(self.calls)
