"""Chat-completion backends with a persistent response cache.

Two backends share one ``complete()`` entry point:

* :class:`OpenAIBackend` speaks the OpenAI chat-completions wire format over HTTP.
* :class:`MockBackend` answers from an ordered list of scripted rules and never
  touches the network.

Caching, the request budget and the in-flight limit live in the base class so
both behave identically.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import httpx

from .errors import ApiError, BudgetExceeded, ConfigError, NoScriptMatch, TransportError

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.4
DEFAULT_PATH = "/v1/chat/completions"
DEFAULT_MAX_IN_FLIGHT = 4
API_KEY_ENV = "CLAIM_API_KEY"
API_BASE_ENV = "CLAIM_API_BASE"

_MESSAGE_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _MESSAGE_ROLES:
            raise ValueError(f"message role must be one of {_MESSAGE_ROLES}, got {self.role!r}")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[Message, ...]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int | None = None

    def __post_init__(self) -> None:
        msgs = tuple(m if isinstance(m, Message) else Message(**m) for m in self.messages)
        object.__setattr__(self, "messages", msgs)
        if not msgs:
            raise ValueError("a chat request needs at least one message")
        if any(m.role == "system" for m in msgs[1:]):
            raise ValueError("only the first message may be a system message")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens is not None and self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    @classmethod
    def from_prompt(cls, prompt: str, model: str, **kwargs: Any) -> "ChatRequest":
        return cls(model, (Message("user", prompt),), **kwargs)

    @property
    def prompt_text(self) -> str:
        return "\n\n".join(m.content for m in self.messages)

    def payload(self) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [m.to_dict() for m in self.messages],
            "temperature": self.temperature,
        }
        if self.max_tokens is not None:
            body["max_tokens"] = self.max_tokens
        return body


@dataclass(frozen=True)
class ChatResponse:
    content: str
    model: str
    usage: Mapping[str, int] = field(default_factory=lambda: {"prompt_tokens": 0, "completion_tokens": 0})
    cached: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {"content": self.content, "model": self.model, "usage": dict(self.usage)}


def _digest(obj: Any) -> str:
    blob = json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def cache_key(backend_id: str, req: ChatRequest) -> str:
    return _digest({"backend": backend_id, **req.payload()})


class ResponseCache:
    """Append-only JSONL store of ``{key, request_digest, response}`` records.

    A torn final write (e.g. the process was killed mid-line) is truncated
    away on load so the next append starts from a clean line boundary.
    """

    def __init__(self, path: str | os.PathLike[str]):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, ChatResponse] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        data = self.path.read_bytes()
        good_end = 0
        offset = 0
        for raw_line in data.splitlines(keepends=True):
            start, offset = offset, offset + len(raw_line)
            if not raw_line.strip():
                continue
            try:
                rec = json.loads(raw_line)
                resp = rec["response"]
                self._entries[rec["key"]] = ChatResponse(resp["content"], resp["model"], resp.get("usage") or {})
            except (ValueError, KeyError, TypeError):
                log.warning("skipping corrupt cache line at byte %d of %s", start, self.path)
                continue
            good_end = offset
        if data[good_end:].strip():
            log.warning("truncating corrupt tail of %s at byte %d", self.path, good_end)
            with open(self.path, "r+b") as fh:
                fh.truncate(good_end)
            data = data[:good_end]
        if data and not data.endswith(b"\n"):
            with open(self.path, "ab") as fh:
                fh.write(b"\n")

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def get(self, key: str) -> ChatResponse | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, req: ChatRequest, resp: ChatResponse) -> None:
        line = json.dumps(
            {"key": key, "request_digest": _digest(req.payload()), "response": resp.to_dict()},
            ensure_ascii=False,
        )
        with self._lock:
            self._entries[key] = replace(resp, cached=False)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()

    def digest(self) -> str:
        if not self.path.exists():
            return hashlib.sha256(b"").hexdigest()
        return hashlib.sha256(self.path.read_bytes()).hexdigest()


class Backend:
    """Shared plumbing: cache lookups, request budget, in-flight limit."""

    def __init__(
        self,
        model: str,
        *,
        cache: ResponseCache | None = None,
        max_requests: int | None = None,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")
        self.model = model
        self.cache = cache
        self.max_requests = max_requests
        self.calls = 0
        self.cache_hits = 0
        self._counter_lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    @property
    def backend_id(self) -> str:
        raise NotImplementedError

    def _send(self, req: ChatRequest) -> ChatResponse:
        raise NotImplementedError

    def complete(self, req: ChatRequest) -> ChatResponse:
        key = cache_key(self.backend_id, req)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                with self._counter_lock:
                    self.cache_hits += 1
                return replace(hit, cached=True)

        with self._counter_lock:
            if self.max_requests is not None and self.calls >= self.max_requests:
                raise BudgetExceeded(self.max_requests)
            self.calls += 1

        with self._slots:
            resp = self._send(req)
        if self.cache is not None:
            self.cache.put(key, req, resp)
        return resp


class OpenAIBackend(Backend):
    """Client for any server exposing ``POST /v1/chat/completions``.

    Transport failures and HTTP 429/5xx are retried with exponential backoff
    (``backoff``, ``2*backoff``, ...) up to ``max_attempts`` attempts in total.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key: str | None = None,
        path: str = DEFAULT_PATH,
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        **kwargs: Any,
    ):
        super().__init__(model, **kwargs)
        if not base_url:
            raise ConfigError("an endpoint base URL is required")
        self.base_url = base_url.rstrip("/")
        self.path = path if path.startswith("/") else "/" + path
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._sleep = sleep
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(headers=headers, timeout=timeout, transport=transport)

    @classmethod
    def from_env(cls, model: str, base_url: str | None = None, **kwargs: Any) -> "OpenAIBackend":
        base = base_url or os.environ.get(API_BASE_ENV)
        if not base:
            raise ConfigError(f"no endpoint configured; set {API_BASE_ENV} or pass a base URL")
        return cls(base, model, api_key=os.environ.get(API_KEY_ENV), **kwargs)

    @property
    def url(self) -> str:
        return self.base_url + self.path

    @property
    def backend_id(self) -> str:
        return f"openai:{self.url}"

    def close(self) -> None:
        self._client.close()

    def _send(self, req: ChatRequest) -> ChatResponse:
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                r = self._client.post(self.url, json=req.payload())
            except httpx.TransportError as exc:
                log.warning("transport error on attempt %d/%d: %s", attempt + 1, self.max_attempts, exc)
                last = TransportError(str(exc))
                continue
            if r.status_code == 429 or r.status_code >= 500:
                log.warning("HTTP %d on attempt %d/%d", r.status_code, attempt + 1, self.max_attempts)
                last = ApiError(r.status_code, r.text)
                continue
            if r.status_code >= 400:
                raise ApiError(r.status_code, r.text)
            return self._decode(r)
        assert last is not None
        raise last

    def _decode(self, r: httpx.Response) -> ChatResponse:
        try:
            body = r.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise ApiError(r.status_code, r.text) from None
        usage = body.get("usage") or {}
        return ChatResponse(
            content=content if content is not None else "",
            model=body.get("model", ""),
            usage={
                "prompt_tokens": int(usage.get("prompt_tokens", 0)),
                "completion_tokens": int(usage.get("completion_tokens", 0)),
            },
        )


@dataclass(frozen=True)
class MockRule:
    """``matcher`` is a plain substring, or a compiled regex searched in the prompt."""

    matcher: str | re.Pattern[str]
    response: str

    def matches(self, prompt: str) -> bool:
        if isinstance(self.matcher, re.Pattern):
            return self.matcher.search(prompt) is not None
        return self.matcher in prompt

    def to_dict(self) -> dict[str, str]:
        if isinstance(self.matcher, re.Pattern):
            return {"regex": self.matcher.pattern, "response": self.response}
        return {"match": self.matcher, "response": self.response}


class MockBackend(Backend):
    """Deterministic scripted backend; the first matching rule answers."""

    def __init__(self, rules: Sequence[MockRule | tuple[Any, str]], model: str = "mock", **kwargs: Any):
        super().__init__(model, **kwargs)
        self.rules = tuple(r if isinstance(r, MockRule) else MockRule(*r) for r in rules)
        if not self.rules:
            raise ConfigError("a mock script needs at least one rule")
        self.prompts: list[str] = []
        self._log_lock = threading.Lock()

    @property
    def backend_id(self) -> str:
        return "mock:" + _digest([r.to_dict() for r in self.rules])[:16]

    def _send(self, req: ChatRequest) -> ChatResponse:
        prompt = req.prompt_text
        with self._log_lock:
            self.prompts.append(prompt)
        for rule in self.rules:
            if rule.matches(prompt):
                return ChatResponse(
                    rule.response,
                    req.model,
                    {"prompt_tokens": len(prompt.split()), "completion_tokens": len(rule.response.split())},
                )
        raise NoScriptMatch(hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16])


def script_mock(rules: Iterable[MockRule | tuple[Any, str]], **kwargs: Any) -> MockBackend:
    return MockBackend(list(rules), **kwargs)


def parse_mock_rules(doc: Any) -> list[MockRule]:
    """Rules from a JSON document: ``{"rules": [{"match"|"regex": ..., "response": ...}]}``."""
    items = doc.get("rules") if isinstance(doc, Mapping) else doc
    if not isinstance(items, list):
        raise ConfigError("mock script must be a list of rules or an object with a 'rules' list")
    rules = []
    for i, item in enumerate(items):
        if not isinstance(item, Mapping) or "response" not in item:
            raise ConfigError(f"mock rule {i} needs a 'response'")
        if "regex" in item:
            rules.append(MockRule(re.compile(item["regex"]), str(item["response"])))
        elif "match" in item:
            rules.append(MockRule(str(item["match"]), str(item["response"])))
        else:
            raise ConfigError(f"mock rule {i} needs 'match' or 'regex'")
    return rules


def load_mock_script(path: str | os.PathLike[str], **kwargs: Any) -> MockBackend:
    with open(path, encoding="utf-8") as fh:
        return MockBackend(parse_mock_rules(json.load(fh)), **kwargs)
