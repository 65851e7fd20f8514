"""Provider-agnostic chat-completion gateway with record/replay cassettes.

Every model call in the pipeline goes through :class:`Gateway`, which pairs a
backend (live HTTP endpoint or scripted mock) with an optional cassette.
Cassettes key responses by a fingerprint of the canonicalized request, so a
recorded pipeline replays byte-identically with zero network access.
"""

from __future__ import annotations

import enum
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

import httpx

from .errors import (
    CassetteMissError,
    ConfigError,
    GatewayTimeoutError,
    MockMissError,
    PipelineError,
    ProviderError,
)
from .serde import canonical_json, digest, read_ndjson


@dataclass(frozen=True)
class CompletionRequest:
    """One chat-completion call. Immutable so it can be fingerprinted."""

    messages: tuple[tuple[str, str], ...]  # (role, content) pairs
    temperature: float = 0.0
    seed: int | None = None
    max_tokens: int = 512
    model_tag: str = "default"

    def __post_init__(self):
        if not self.messages:
            raise ConfigError("completion request needs at least one message")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens <= 0:
            raise ConfigError("max_tokens must be positive")

    def canonical_payload(self) -> dict[str, Any]:
        return {
            "messages": [[role, content] for role, content in self.messages],
            "temperature": self.temperature,
            "seed": self.seed,
            "max_tokens": self.max_tokens,
            "model_tag": self.model_tag,
        }


def fingerprint(request: CompletionRequest) -> str:
    """Digest of the canonicalized request (key order / whitespace invariant)."""
    return digest(request.canonical_payload())


class CassetteMode(str, enum.Enum):
    RECORD = "record"
    REPLAY_STRICT = "replay_strict"
    REPLAY_FALLTHROUGH = "replay_fallthrough"


class Cassette:
    """Append-only request->response log backed by a newline-delimited file."""

    def __init__(self, path: str | Path, mode: CassetteMode | str):
        self.path = Path(path)
        self.mode = CassetteMode(mode)
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        if self.path.exists():
            for row in read_ndjson(self.path):
                self._entries.setdefault(row["fingerprint"], row["response"])
        elif self.mode is CassetteMode.REPLAY_STRICT:
            raise ConfigError(f"cassette file not found for strict replay: {self.path}")

    def __len__(self) -> int:
        return len(self._entries)

    def lookup(self, fp: str) -> str | None:
        return self._entries.get(fp)

    def record(self, fp: str, request: CompletionRequest, response: str) -> None:
        with self._lock:
            if fp in self._entries:
                return
            self._entries[fp] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(
                    canonical_json(
                        {
                            "fingerprint": fp,
                            "request": request.canonical_payload(),
                            "response": response,
                        }
                    )
                )
                fh.write("\n")


class Backend(Protocol):
    def send(self, request: CompletionRequest) -> str: ...


Matcher = Callable[[CompletionRequest], bool]
Responder = Callable[[CompletionRequest], str]


def _prompt_text(request: CompletionRequest) -> str:
    return "\n".join(content for _, content in request.messages)


class MockBackend:
    """Scriptable backend for tests: ordered (matcher -> response) rules.

    Matchers may be plain substrings (checked against the joined message
    contents) or predicates over the request.  Distinct from cassettes: this
    fakes the provider, cassettes record/replay whatever backend ran.
    """

    def __init__(self, default: str | Responder | None = None):
        self._rules: list[tuple[Matcher, Responder]] = []
        self._default = default
        self.calls: list[CompletionRequest] = []
        self._lock = threading.Lock()

    def add(self, matcher: str | Matcher, response: str | Responder) -> "MockBackend":
        if isinstance(matcher, str):
            needle = matcher
            matcher = lambda req: needle in _prompt_text(req)  # noqa: E731
        if isinstance(response, str):
            text = response
            response = lambda req: text  # noqa: E731
        self._rules.append((matcher, response))
        return self

    def send(self, request: CompletionRequest) -> str:
        with self._lock:
            self.calls.append(request)
        for matcher, responder in self._rules:
            if matcher(request):
                return responder(request)
        if self._default is None:
            raise MockMissError(
                f"no mock rule matches request: {_prompt_text(request)[:120]!r}"
            )
        if callable(self._default):
            return self._default(request)
        return self._default


class HttpBackend:
    """OpenAI-style chat-completions endpoint (API key via environment)."""

    def __init__(
        self,
        endpoint: str,
        *,
        api_key_env: str = "SDOH_PIPELINE_API_KEY",
        timeout_s: float = 60.0,
        client: httpx.Client | None = None,
    ):
        import os

        self.endpoint = endpoint.rstrip("/")
        self.api_key = os.environ.get(api_key_env, "")
        if not self.api_key:
            raise ConfigError(f"API key environment variable {api_key_env} is not set")
        self.timeout_s = timeout_s
        self._client = client or httpx.Client(timeout=timeout_s)

    def send(self, request: CompletionRequest) -> str:
        body = {
            "model": request.model_tag,
            "messages": [
                {"role": role, "content": content} for role, content in request.messages
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            body["seed"] = request.seed
        try:
            resp = self._client.post(
                f"{self.endpoint}/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {self.api_key}"},
            )
        except httpx.TimeoutException as exc:
            raise GatewayTimeoutError(f"provider timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise ProviderError(f"transport failure: {exc}", transient=True) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise ProviderError(
                f"provider returned {resp.status_code}", transient=True
            )
        if resp.status_code >= 400:
            raise ProviderError(f"provider returned {resp.status_code}: {resp.text}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ProviderError(f"malformed provider response: {exc}") from exc


@dataclass(frozen=True)
class RetryPolicy:
    """Transient failures retried with exponential backoff (1s/2s/4s default)."""

    attempts: int = 3
    backoff_s: tuple[float, ...] = (1.0, 2.0, 4.0)
    sleep: Callable[[float], None] = time.sleep


@dataclass
class SuiteEntry:
    """One response (or error marker) from a multi-run suite."""

    run_index: int
    request_index: int
    response: str | None
    error: str | None = None


#: Temperature schedule for the five-run protocol: one deterministic run plus
#: four sampled runs used for confidence intervals.
FIVE_RUN_SCHEDULE: tuple[float, ...] = (0.0, 0.5, 0.5, 0.5, 0.5)


class Gateway:
    """Completion front door: cassette first, then (bounded) backend calls."""

    def __init__(
        self,
        backend: Backend | None = None,
        cassette: Cassette | None = None,
        *,
        retry: RetryPolicy | None = None,
        max_in_flight: int = 4,
    ):
        if backend is None and cassette is None:
            raise ConfigError("gateway needs a backend, a cassette, or both")
        if (
            backend is None
            and cassette is not None
            and cassette.mode is not CassetteMode.REPLAY_STRICT
        ):
            raise ConfigError(f"cassette mode {cassette.mode.value} needs a backend")
        self.backend = backend
        self.cassette = cassette
        self.retry = retry or RetryPolicy()
        self._sem = threading.BoundedSemaphore(max_in_flight)
        self.live_calls = 0
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> str:
        fp = fingerprint(request)
        if self.cassette is not None:
            hit = self.cassette.lookup(fp)
            if hit is not None:
                return hit
            if self.cassette.mode is CassetteMode.REPLAY_STRICT:
                raise CassetteMissError(f"no recorded response for fingerprint {fp}")
        if self.backend is None:
            raise ConfigError("no backend configured for a live call")
        text = self._send_with_retry(request)
        if self.cassette is not None:
            self.cassette.record(fp, request, text)
        return text

    def _send_with_retry(self, request: CompletionRequest) -> str:
        last: PipelineError | None = None
        for attempt in range(self.retry.attempts):
            try:
                with self._sem:
                    with self._lock:
                        self.live_calls += 1
                    return self.backend.send(request)
            except ProviderError as exc:
                last = exc
                if not exc.transient or attempt == self.retry.attempts - 1:
                    raise
                idx = min(attempt, len(self.retry.backoff_s) - 1)
                self.retry.sleep(self.retry.backoff_s[idx])
        raise last  # pragma: no cover - loop always raises or returns

    def complete_many(self, requests: Sequence[CompletionRequest]) -> list[str]:
        """Complete requests concurrently; results keep input order."""
        if not requests:
            return []
        workers = min(len(requests), 32)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self.complete, requests))

    def run_suite(
        self,
        requests: Sequence[CompletionRequest],
        temperature_schedule: Sequence[float],
    ) -> list[SuiteEntry]:
        """One full pass over the requests per schedule entry.

        Each pass gets a distinct seed (base seed + run index) so every run is
        individually recorded and replayable.  Per-request failures become
        error markers rather than aborting the suite.
        """
        if not temperature_schedule:
            raise ConfigError("temperature schedule must have at least one entry")
        entries: list[SuiteEntry] = []
        for run_index, temp in enumerate(temperature_schedule):
            for i, req in enumerate(requests):
                run_req = replace(
                    req,
                    temperature=temp,
                    seed=(req.seed or 0) + run_index,
                )
                try:
                    entries.append(
                        SuiteEntry(run_index, i, self.complete(run_req))
                    )
                except PipelineError as exc:
                    entries.append(
                        SuiteEntry(
                            run_index, i, None, f"{type(exc).__name__}: {exc}"
                        )
                    )
        return entries
