"""Chat-completion gateway: request types, backends and token accounting."""

from __future__ import annotations

import contextlib
import contextvars
import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Protocol

import requests

from .prompts import PromptCatalog

logger = logging.getLogger(__name__)


class GatewayError(RuntimeError):
    """Base class for backend failures. ``template`` names the prompt that failed."""

    def __init__(self, message: str, template: str = ""):
        self.template = template
        prefix = f"[{template}] " if template else ""
        super().__init__(prefix + message)


class TransportError(GatewayError):
    pass


class ProviderError(GatewayError):
    def __init__(self, message: str, template: str = "", status: int | None = None):
        self.status = status
        super().__init__(message, template)


class ScriptMissError(GatewayError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    user_text: str
    system_text: str = ""
    model_id: str = "default"
    temperature: float = 0.0
    max_output_tokens: int = 512
    template: str = ""
    digest: str = ""

    def __post_init__(self):
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature must be in [0, 1], got {self.temperature}")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    estimated: bool = False

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


def whitespace_tokens(text: str) -> int:
    return len(text.split())


class UsageLedger:
    """Thread-safe running total of token usage."""

    def __init__(self):
        self._lock = threading.Lock()
        self.prompt_tokens = 0
        self.completion_tokens = 0
        self.calls = 0
        self.estimated = False

    def add(self, response: ChatResponse) -> None:
        with self._lock:
            self.prompt_tokens += response.prompt_tokens
            self.completion_tokens += response.completion_tokens
            self.calls += 1
            self.estimated = self.estimated or response.estimated

    def snapshot(self) -> tuple[int, int]:
        with self._lock:
            return self.prompt_tokens, self.completion_tokens

    @property
    def total(self) -> int:
        p, c = self.snapshot()
        return p + c


_active_ledgers: contextvars.ContextVar[tuple[UsageLedger, ...]] = contextvars.ContextVar(
    "decqa_active_ledgers", default=()
)


@contextlib.contextmanager
def track_usage(ledger: UsageLedger | None = None) -> Iterator[UsageLedger]:
    """Attribute every gateway call made in this context (and nested ones) to ``ledger``."""
    ledger = ledger if ledger is not None else UsageLedger()
    token = _active_ledgers.set(_active_ledgers.get() + (ledger,))
    try:
        yield ledger
    finally:
        _active_ledgers.reset(token)


class ChatBackend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


@dataclass(frozen=True)
class ScriptEntry:
    template: str
    digest: str
    response_text: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None

    def to_dict(self) -> dict:
        d = {"template": self.template, "digest": self.digest, "response_text": self.response_text}
        if self.prompt_tokens is not None:
            d["prompt_tokens"] = self.prompt_tokens
        if self.completion_tokens is not None:
            d["completion_tokens"] = self.completion_tokens
        return d


class ScriptedBackend:
    """Deterministic backend answering from a table keyed by (template, digest).

    When an entry carries no token counts, whitespace counts of the prompt and
    the canned response are used; these are this backend's exact accounting,
    not an estimate of some other tokenizer.
    """

    def __init__(self, entries: Iterable[ScriptEntry] = ()):
        table: dict[tuple[str, str], ScriptEntry] = {}
        for e in entries:
            table[(e.template, e.digest)] = e
        self._table = table

    def __len__(self) -> int:
        return len(self._table)

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._table

    @property
    def entries(self) -> list[ScriptEntry]:
        return list(self._table.values())

    def complete(self, request: ChatRequest) -> ChatResponse:
        entry = self._table.get((request.template, request.digest))
        if entry is None:
            raise ScriptMissError(f"no scripted response for digest {request.digest}", request.template)
        prompt_tokens = entry.prompt_tokens
        if prompt_tokens is None:
            prompt_tokens = whitespace_tokens(request.system_text) + whitespace_tokens(request.user_text)
        completion_tokens = entry.completion_tokens
        if completion_tokens is None:
            completion_tokens = whitespace_tokens(entry.response_text)
        return ChatResponse(entry.response_text, prompt_tokens, completion_tokens)

    @classmethod
    def from_records(cls, records: Iterable[Mapping]) -> "ScriptedBackend":
        entries = []
        for r in records:
            entries.append(
                ScriptEntry(
                    template=r["template"],
                    digest=r["digest"],
                    response_text=r["response_text"],
                    prompt_tokens=r.get("prompt_tokens"),
                    completion_tokens=r.get("completion_tokens"),
                )
            )
        return cls(entries)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ScriptedBackend":
        records = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        return cls.from_records(records)

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self._table.values():
                fh.write(json.dumps(e.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


class OpenAICompatibleBackend:
    """Client for an OpenAI-style ``/chat/completions`` endpoint.

    The API key is read from ``api_key_env`` at call time and never logged.
    At most ``max_in_flight`` requests run concurrently; transport failures are
    retried once, provider error statuses are not retried.
    """

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 60.0,
        max_in_flight: int = 4,
        retries: int = 1,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be positive")
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_in_flight = max_in_flight
        self.retries = retries
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_slots"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._slots = threading.BoundedSemaphore(self.max_in_flight)

    @property
    def endpoint(self) -> str:
        return f"{self.base_url}/chat/completions"

    def _payload(self, request: ChatRequest) -> dict:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        return {
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }

    def _post(self, request: ChatRequest) -> requests.Response:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = self._payload(request)
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                with self._slots:
                    return requests.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                logger.warning("transport failure on %s (attempt %d)", self.endpoint, attempt + 1)
        raise TransportError(f"cannot reach {self.endpoint}: {last_exc}", request.template)

    def complete(self, request: ChatRequest) -> ChatResponse:
        resp = self._post(request)
        if resp.status_code >= 400:
            raise ProviderError(
                f"{self.endpoint} returned HTTP {resp.status_code}: {resp.text[:200]}",
                request.template,
                status=resp.status_code,
            )
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise ProviderError(f"malformed response from {self.endpoint}", request.template) from None
        if text is None:
            raise ProviderError(f"{self.endpoint} returned no message content", request.template)
        usage = body.get("usage") or {}
        p, c = usage.get("prompt_tokens"), usage.get("completion_tokens")
        if isinstance(p, int) and isinstance(c, int):
            return ChatResponse(text, p, c)
        p = whitespace_tokens(request.system_text) + whitespace_tokens(request.user_text)
        return ChatResponse(text, p, whitespace_tokens(text), estimated=True)


class LLMGateway:
    """Renders catalog templates into requests and routes them to a backend.

    ``models`` maps a role (``main``, ``ek``, ``judge``) to a model id; roles not
    listed fall back to ``models["main"]``.
    """

    def __init__(
        self,
        backend: ChatBackend,
        catalog: PromptCatalog | None = None,
        models: Mapping[str, str] | None = None,
        temperature: float = 0.0,
        max_output_tokens: int = 512,
    ):
        self.backend = backend
        self.catalog = catalog if catalog is not None else PromptCatalog()
        self.models = dict(models or {"main": "default"})
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens

    def model_for(self, role: str) -> str:
        return self.models.get(role) or self.models.get("main", "default")

    def build_request(self, template: str, bindings: Mapping[str, str], role: str = "main") -> ChatRequest:
        tpl = self.catalog[template]
        return ChatRequest(
            user_text=tpl.render(bindings),
            system_text=tpl.system,
            model_id=self.model_for(role),
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            template=tpl.name,
            digest=tpl.digest(bindings),
        )

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.backend.complete(request)
        for ledger in _active_ledgers.get():
            ledger.add(response)
        logger.debug(
            "%s/%s: %d+%d tokens", request.template, request.digest, response.prompt_tokens, response.completion_tokens
        )
        return response

    def prompt(self, template: str, bindings: Mapping[str, str], role: str = "main") -> ChatResponse:
        return self.complete(self.build_request(template, bindings, role))
