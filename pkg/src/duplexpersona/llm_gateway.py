"""Chat-completion clients (HTTP and mock) and trailing-JSON extraction."""

from __future__ import annotations

import ast
import json
import logging
import os
import re
import socket
import threading
import time
import urllib.error
import urllib.request
from dataclasses import asdict, dataclass
from typing import Callable

from .core import DuplexPersonaError, LLMSettings

logger = logging.getLogger(__name__)


class GatewayError(DuplexPersonaError):
    pass


class AuthError(GatewayError):
    pass


class RateLimited(GatewayError):
    pass


class TransportError(GatewayError):
    pass


class DeadlineExceeded(TransportError):
    pass


class MalformedServerResponse(GatewayError):
    pass


class NoJsonFound(DuplexPersonaError, ValueError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[dict, ...]
    model: str = "gpt-4o-2024-11-20"
    temperature: float = 0.0
    max_tokens: int = 2048
    tag: str = ""

    def __post_init__(self):
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")

    @classmethod
    def user(cls, prompt: str, **kwargs) -> "ChatRequest":
        return cls(messages=({"role": "user", "content": prompt},), **kwargs)

    @property
    def prompt(self) -> str:
        return "\n".join(m["content"] for m in self.messages)


@dataclass
class UsageStats:
    calls: int = 0
    retries: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


class ChatClient:
    """Common surface: ``complete(request) -> str``."""

    def __init__(self):
        self.usage = UsageStats()
        self._usage_lock = threading.Lock()

    def complete(self, request: ChatRequest) -> str:
        raise NotImplementedError

    def _count(self, prompt_tokens=0, completion_tokens=0, retries=0):
        with self._usage_lock:
            self.usage.calls += 1
            self.usage.retries += retries
            self.usage.prompt_tokens += prompt_tokens
            self.usage.completion_tokens += completion_tokens


def complete(client: ChatClient, request: ChatRequest) -> str:
    return client.complete(request)


class Journal:
    """Append-only JSON-lines log of requests and raw responses."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()

    def write(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, ensure_ascii=False)
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")


class HttpChatClient(ChatClient):
    """OpenAI-compatible ``POST {endpoint}/chat/completions`` client.

    Retries timeouts, connection failures, 429 and 5xx with exponential
    backoff. Every call is bounded by ``settings.deadline_s`` overall.
    """

    def __init__(
        self,
        settings: LLMSettings,
        api_key: str | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__()
        if not settings.endpoint:
            raise GatewayError("no chat endpoint configured")
        self.settings = settings
        self.api_key = api_key if api_key is not None else os.environ.get(settings.api_key_env)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(settings.max_in_flight)
        self.journal = Journal(settings.journal_path) if settings.journal_path else None

    @property
    def url(self) -> str:
        return self.settings.endpoint.rstrip("/") + "/chat/completions"

    def _body(self, request: ChatRequest) -> bytes:
        payload = {
            "model": request.model,
            "messages": list(request.messages),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        return json.dumps(payload).encode("utf-8")

    def _backoff(self, attempt: int, retry_after: str | None) -> float:
        delay = self.settings.backoff_base_s * (2**attempt)
        if retry_after:
            try:
                delay = max(delay, float(retry_after))
            except ValueError:
                pass
        return min(delay, self.settings.backoff_max_s)

    def complete(self, request: ChatRequest) -> str:
        if not self.api_key:
            raise AuthError(f"missing credential: set ${self.settings.api_key_env}")
        deadline = time.monotonic() + self.settings.deadline_s
        body = self._body(request)
        last_error: GatewayError | None = None
        with self._slots:
            for attempt in range(self.settings.max_attempts):
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise DeadlineExceeded(f"deadline of {self.settings.deadline_s}s exceeded") from last_error
                req = urllib.request.Request(
                    self.url,
                    data=body,
                    method="POST",
                    headers={
                        "Content-Type": "application/json",
                        "Authorization": f"Bearer {self.api_key}",
                    },
                )
                retry_after = None
                try:
                    with urllib.request.urlopen(req, timeout=remaining) as resp:
                        raw = resp.read()
                    return self._finish(request, raw, attempt)
                except urllib.error.HTTPError as exc:
                    status = exc.code
                    retry_after = exc.headers.get("Retry-After") if exc.headers else None
                    detail = exc.read()[:500].decode("utf-8", "replace")
                    if status in (401, 403):
                        raise AuthError(f"HTTP {status}: {detail}") from None
                    if status == 429:
                        last_error = RateLimited(f"HTTP 429 after {attempt + 1} attempt(s): {detail}")
                    elif status >= 500:
                        last_error = TransportError(f"HTTP {status}: {detail}")
                    else:
                        raise TransportError(f"HTTP {status}: {detail}") from None
                except (socket.timeout, TimeoutError):
                    last_error = DeadlineExceeded(f"request timed out after {self.settings.deadline_s}s")
                except urllib.error.URLError as exc:
                    if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                        last_error = DeadlineExceeded(f"request timed out: {exc.reason}")
                    else:
                        last_error = TransportError(f"connection failed: {exc.reason}")
                except (ConnectionError, OSError) as exc:
                    last_error = TransportError(f"connection failed: {exc}")
                if attempt + 1 < self.settings.max_attempts:
                    delay = min(self._backoff(attempt, retry_after), max(0.0, deadline - time.monotonic()))
                    logger.warning("%s; retrying in %.2fs (tag=%s)", last_error, delay, request.tag)
                    self._sleep(delay)
        assert last_error is not None
        raise last_error

    def _finish(self, request: ChatRequest, raw: bytes, attempt: int) -> str:
        try:
            data = json.loads(raw)
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise MalformedServerResponse(f"unexpected response body: {raw[:200]!r}") from None
        if not isinstance(text, str):
            raise MalformedServerResponse("assistant content is not a string")
        usage = data.get("usage") or {}
        self._count(
            int(usage.get("prompt_tokens") or 0), int(usage.get("completion_tokens") or 0), attempt
        )
        if self.journal:
            self.journal.write({"tag": request.tag, "request": json.loads(self._body(request)), "response": data})
        return text


class MockChatClient(ChatClient):
    """Deterministic offline client; the reply is a pure function of (prompt, seed)."""

    def __init__(
        self,
        seed: int = 0,
        responder: Callable[[str, int], str] | None = None,
        journal_path: str | None = None,
    ):
        super().__init__()
        self.seed = seed
        self.responder = responder
        self.journal = Journal(journal_path) if journal_path else None

    def complete(self, request: ChatRequest) -> str:
        responder = self.responder
        if responder is None:
            from .synth import mock_chat

            responder = mock_chat
        text = responder(request.prompt, self.seed)
        self._count()
        if self.journal:
            self.journal.write({"tag": request.tag, "prompt": request.prompt, "response": text})
        return text


def _trailing_commas(s: str) -> str:
    return re.sub(r",\s*([}\]])", r"\1", s)


def _balanced_candidates(text: str):
    """(start, end) spans of brace-balanced regions, skipping quoted strings."""
    stack = []
    quote = None
    escaped = False
    for i, ch in enumerate(text):
        if quote:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == quote:
                quote = None
            continue
        if ch in "\"'" and stack:
            quote = ch
        elif ch == "{":
            stack.append(i)
        elif ch == "}" and stack:
            yield stack.pop(), i + 1


def _lenient_parse(chunk: str):
    for attempt in (chunk, _trailing_commas(chunk)):
        try:
            return json.loads(attempt)
        except ValueError:
            pass
        try:
            value = ast.literal_eval(attempt)
        except (ValueError, SyntaxError, MemoryError, RecursionError):
            continue
        if isinstance(value, dict):
            return value
    return None


def extract_trailing_json(text: str) -> dict:
    """Return the last complete JSON object in ``text``.

    "Last" means the object ending furthest to the right; among objects that
    end at the same place the outermost wins. Falls back to a lenient parse
    (single quotes, trailing commas) when no strict JSON object is present.
    """
    decoder = json.JSONDecoder()
    best = None
    pos = text.rfind("{")
    while pos != -1:
        try:
            value, end = decoder.raw_decode(text, pos)
        except ValueError:
            pass
        else:
            if isinstance(value, dict) and (best is None or end >= best[0]):
                best = (end, value)
        pos = text.rfind("{", 0, pos)
    if best is not None:
        return best[1]

    lenient = None
    for start, end in _balanced_candidates(text):
        value = _lenient_parse(text[start:end])
        if isinstance(value, dict) and (lenient is None or end >= lenient[0]):
            lenient = (end, value)
    if lenient is not None:
        return lenient[1]
    raise NoJsonFound("no JSON object found in model output")
