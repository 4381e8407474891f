"""Uniform completion interface over live, scripted, and replay backends.

The gateway owns the cross-cutting concerns: retry with exponential
backoff, a sliding-window rate limit on live dispatches, a token budget
shared by all callers, optional cassette recording, and a call log used
for manifest accounting. All shared state is lock-protected so lineage
workers can call it concurrently.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional

import requests

from .errors import (
    AuthError,
    BudgetExhausted,
    NoRecordedResponse,
    NoScriptedResponse,
    RateLimited,
    RetriesExhausted,
    StoreNotWritable,
    TransportError,
)
from .ingest import estimate_tokens
from .protocol import PromptText

ENV_API_KEY = "EVOQA_API_KEY"
ENV_ENDPOINT = "EVOQA_ENDPOINT"

DEFAULT_CREATIVE_TEMPERATURE = 0.7
DEFAULT_JUDGE_TEMPERATURE = 0.0


def request_fingerprint(prompt_text: str, model_name: str, temperature: float) -> str:
    payload = f"{prompt_text}\x1f{model_name}\x1f{temperature!r}".encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class CompletionRequest:
    prompt: PromptText
    model_name: str
    temperature: float
    max_output_tokens: int

    @property
    def request_fingerprint(self) -> str:
        return request_fingerprint(self.prompt.text, self.model_name, self.temperature)


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_token_estimate: int
    output_token_estimate: int
    latency_ms: int
    backend_kind: str


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff_ms: int = 500
    backoff_multiplier: float = 2.0

    def backoff_ms(self, attempt: int) -> float:
        """Wait before retrying after 1-indexed attempt k."""
        return self.base_backoff_ms * self.backoff_multiplier ** (attempt - 1)


class RateLimiter:
    """Sliding-window limiter: at most limit_per_sec dispatches in any 1 s window."""

    def __init__(self, limit_per_sec: int,
                 clock: Callable[[], float] = time.monotonic,
                 sleeper: Callable[[float], None] = time.sleep):
        self.limit = limit_per_sec
        self.clock = clock
        self.sleeper = sleeper
        self._stamps: List[float] = []
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            while True:
                now = self.clock()
                self._stamps = [t for t in self._stamps if now - t < 1.0]
                if len(self._stamps) < self.limit:
                    self._stamps.append(now)
                    return
                wait = self._stamps[0] + 1.0 - now
                if wait <= 0:
                    # float rounding can leave a stamp at exactly the window edge
                    self._stamps.pop(0)
                    continue
                self.sleeper(wait)


class LiveBackend:
    """One HTTPS round trip per completion to an OpenAI-style chat endpoint."""

    kind = "live"

    def __init__(self, endpoint: Optional[str] = None, api_key: Optional[str] = None,
                 timeout_s: float = 120.0):
        self.endpoint = endpoint or os.environ.get(ENV_ENDPOINT)
        self.api_key = api_key or os.environ.get(ENV_API_KEY)
        self.timeout_s = timeout_s

    def complete(self, req: CompletionRequest) -> CompletionResult:
        if not self.api_key:
            raise AuthError(f"no API key: set {ENV_API_KEY}")
        if not self.endpoint:
            raise AuthError(f"no endpoint: set {ENV_ENDPOINT}")
        body = {
            "model": req.model_name,
            "messages": [{"role": "user", "content": req.prompt.text}],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        started = time.monotonic()
        try:
            resp = requests.post(
                self.endpoint,
                json=body,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise TransportError(f"request failed: {exc}") from exc
        latency_ms = int((time.monotonic() - started) * 1000)
        if resp.status_code in (401, 403):
            raise AuthError(f"HTTP {resp.status_code}")
        if resp.status_code == 429:
            retry_after = resp.headers.get("Retry-After")
            raise RateLimited(retry_after_ms=int(float(retry_after) * 1000) if retry_after else None)
        if resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise TransportError(f"unexpected HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            text = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc
        return CompletionResult(
            text=text,
            prompt_token_estimate=estimate_tokens(req.prompt.text),
            output_token_estimate=estimate_tokens(text),
            latency_ms=latency_ms,
            backend_kind=self.kind,
        )


class ScriptedBackend:
    """Deterministic backend for tests: fingerprint table + per-role rules.

    Rules are either static strings or callables taking the request.
    Failure injection: exceptions queued via fail_next are raised (and
    consumed) one per call before any lookup.
    """

    kind = "scripted"

    def __init__(self,
                 by_fingerprint: Optional[Dict[str, str]] = None,
                 by_role: Optional[Dict[str, object]] = None):
        self.by_fingerprint = dict(by_fingerprint or {})
        self.by_role = dict(by_role or {})
        self._failures: List[Exception] = []
        self._lock = threading.Lock()

    def fail_next(self, *errors: Exception) -> None:
        with self._lock:
            self._failures.extend(errors)

    def complete(self, req: CompletionRequest) -> CompletionResult:
        with self._lock:
            if self._failures:
                raise self._failures.pop(0)
        text = self.by_fingerprint.get(req.request_fingerprint)
        if text is None:
            rule = self.by_role.get(req.prompt.role_tag)
            if rule is None:
                raise NoScriptedResponse(
                    f"no script for fingerprint {req.request_fingerprint[:12]} "
                    f"or role {req.prompt.role_tag}")
            text = rule(req) if callable(rule) else rule
        return CompletionResult(
            text=text,
            prompt_token_estimate=estimate_tokens(req.prompt.text),
            output_token_estimate=estimate_tokens(text),
            latency_ms=0,
            backend_kind=self.kind,
        )


class ReplayBackend:
    """Replays a recorded cassette, keyed by request fingerprint."""

    kind = "replay"

    def __init__(self, cassette_path):
        self.cassette_path = Path(cassette_path)
        self._entries = load_cassette(self.cassette_path)

    def complete(self, req: CompletionRequest) -> CompletionResult:
        entry = self._entries.get(req.request_fingerprint)
        if entry is None:
            raise NoRecordedResponse(
                f"fingerprint {req.request_fingerprint[:12]} not in cassette "
                f"{self.cassette_path}")
        return CompletionResult(
            text=entry["text"],
            prompt_token_estimate=entry["prompt_token_estimate"],
            output_token_estimate=entry["output_token_estimate"],
            latency_ms=0,
            backend_kind=self.kind,
        )


def load_cassette(path) -> Dict[str, dict]:
    entries: Dict[str, dict] = {}
    p = Path(path)
    if not p.exists():
        return entries
    for line in p.read_text(encoding="utf-8").splitlines():
        if line.strip():
            record = json.loads(line)
            entries[record["request_fingerprint"]] = record  # last write wins
    return entries


class CassetteRecorder:
    """Append-only cassette writer; replay resolves duplicates last-write-wins."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def record(self, req: CompletionRequest, result: CompletionResult) -> None:
        record = {
            "request_fingerprint": req.request_fingerprint,
            "prompt_digest": req.prompt.context_digest,
            "text": result.text,
            "prompt_token_estimate": result.prompt_token_estimate,
            "output_token_estimate": result.output_token_estimate,
        }
        line = json.dumps(record, ensure_ascii=False) + "\n"
        with self._lock:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line)
                    fh.flush()
            except OSError as exc:
                raise StoreNotWritable(f"cannot write cassette {self.path}: {exc}") from exc


RETRYABLE = (TransportError, RateLimited)


@dataclass
class CallLogEntry:
    role_tag: str
    fingerprint: str
    backend_kind: str


class Gateway:
    """Front door for all completions; thread-safe."""

    def __init__(self, backend, retry_policy: Optional[RetryPolicy] = None,
                 rate_limiter: Optional[RateLimiter] = None,
                 max_total_tokens: Optional[int] = None,
                 recorder: Optional[CassetteRecorder] = None,
                 sleeper: Callable[[float], None] = time.sleep):
        self.backend = backend
        self.retry_policy = retry_policy or RetryPolicy()
        self.rate_limiter = rate_limiter
        self.max_total_tokens = max_total_tokens
        self.recorder = recorder
        self.sleeper = sleeper
        self.call_log: List[CallLogEntry] = []
        self.total_token_estimate = 0
        self._lock = threading.Lock()

    def complete(self, req: CompletionRequest) -> CompletionResult:
        with self._lock:
            if (self.max_total_tokens is not None
                    and self.total_token_estimate + estimate_tokens(req.prompt.text)
                    > self.max_total_tokens):
                raise BudgetExhausted(
                    f"token budget {self.max_total_tokens} would be exceeded")
        if self.rate_limiter is not None and self.backend.kind == "live":
            self.rate_limiter.acquire()
        result = self.backend.complete(req)
        with self._lock:
            self.call_log.append(CallLogEntry(
                req.prompt.role_tag, req.request_fingerprint, result.backend_kind))
            self.total_token_estimate += (
                result.prompt_token_estimate + result.output_token_estimate)
        if self.recorder is not None:
            self.recorder.record(req, result)
        return result

    def complete_with_retry(self, req: CompletionRequest,
                            policy: Optional[RetryPolicy] = None) -> CompletionResult:
        """Retry transport/rate-limit failures; everything else is terminal."""
        policy = policy or self.retry_policy
        last_error: Optional[Exception] = None
        for attempt in range(1, policy.max_attempts + 1):
            try:
                return self.complete(req)
            except RETRYABLE as exc:
                last_error = exc
                if attempt < policy.max_attempts:
                    wait_ms = policy.backoff_ms(attempt)
                    if isinstance(exc, RateLimited) and exc.retry_after_ms:
                        wait_ms = max(wait_ms, exc.retry_after_ms)
                    self.sleeper(wait_ms / 1000.0)
        raise RetriesExhausted(last_error)

    def calls_for_roles(self, *role_tags: str) -> int:
        with self._lock:
            return sum(1 for entry in self.call_log if entry.role_tag in role_tags)
