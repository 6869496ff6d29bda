"""Generator backends behind a single ``generate(conversation)`` contract."""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from typing import Callable, Sequence

import requests

from .model import (
    ChatHTTPGeneratorSpec,
    GeneratorResponse,
    Message,
    MessageKind,
    Role,
    ScriptedGeneratorSpec,
)
from .runtime import WallClock, to_datetime

log = logging.getLogger(__name__)

BACKOFF_START = 0.5
BACKOFF_CAP = 8.0


class GeneratorError(RuntimeError):
    """Transport or protocol failure after all retries."""


class ScriptExhausted(RuntimeError):
    """A scripted generator has no responses left."""


def estimate_tokens(text_or_chars) -> int:
    """Crude fallback token count: one token per four characters, rounded up."""
    n = text_or_chars if isinstance(text_or_chars, int) else len(text_or_chars)
    return math.ceil(n / 4)


def backoff_delays(max_retries: int) -> list[float]:
    return [min(BACKOFF_START * 2**k, BACKOFF_CAP) for k in range(max_retries)]


def _check_conversation(conversation: Sequence[Message]) -> None:
    if not conversation:
        raise ValueError("conversation must not be empty")
    if conversation[-1].role is not Role.USER:
        raise ValueError("the last message must come from the user")


def render_wire_request(conversation: Sequence[Message], spec) -> dict:
    """Chat-completion request body for ``conversation``."""
    if not isinstance(spec, ChatHTTPGeneratorSpec):
        raise TypeError("wire requests exist only for chat_http generators")
    if not conversation:
        raise ValueError("conversation must not be empty")
    return {
        "model": spec.model,
        "messages": [m.to_wire() for m in conversation],
        "temperature": spec.temperature,
    }


class ScriptedGenerator:
    """Returns the configured responses in order, one per call."""

    model_identity = "scripted"

    def __init__(self, spec: ScriptedGeneratorSpec, clock=None, sleep=time.sleep):
        self.spec = spec
        self.clock = clock or WallClock()
        self.sleep = sleep
        self._next = 0
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        return len(self.spec.responses) - self._next

    def generate(self, conversation: Sequence[Message]) -> GeneratorResponse:
        _check_conversation(conversation)
        with self._lock:
            if self._next >= len(self.spec.responses):
                raise ScriptExhausted(f"script exhausted after {self._next} responses")
            text = self.spec.responses[self._next]
            self._next += 1
        start = self.clock.now()
        if self.spec.delay:
            self.sleep(self.spec.delay)
        end = self.clock.now()
        return GeneratorResponse(
            message=Message(Role.ASSISTANT, text, MessageKind.GENERATED, to_datetime(end)),
            model_identity=self.model_identity,
            latency=end - start,
            tokens_prompt=estimate_tokens(sum(len(m.content) for m in conversation)),
            tokens_completion=estimate_tokens(text),
        )


class ChatHTTPGenerator:
    """Client for any endpoint speaking the chat-completion JSON shape."""

    def __init__(
        self,
        spec: ChatHTTPGeneratorSpec,
        clock=None,
        sleep: Callable[[float], None] = time.sleep,
        session: requests.Session | None = None,
    ):
        self.spec = spec
        self.clock = clock or WallClock()
        self.sleep = sleep
        self.session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.spec.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def generate(self, conversation: Sequence[Message]) -> GeneratorResponse:
        _check_conversation(conversation)
        payload = render_wire_request(conversation, self.spec)
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        delays = backoff_delays(self.spec.max_retries)
        last_error: Exception | None = None
        start = self.clock.now()
        for attempt in range(1, self.spec.max_retries + 2):
            log.info("POST %s attempt %d", self.spec.endpoint, attempt)
            try:
                resp = self.session.post(
                    self.spec.endpoint,
                    data=body,
                    headers=self._headers(),
                    timeout=self.spec.request_timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
            else:
                status = resp.status_code
                if 400 <= status < 500 and status != 429:
                    # client errors will not improve on retry
                    raise GeneratorError(f"HTTP {status}: {resp.text[:300]}")
                if status < 400:
                    try:
                        return self._parse(resp.json(), conversation, start, attempt)
                    except ValueError as exc:
                        last_error = exc
                else:
                    last_error = GeneratorError(f"HTTP {status}: {resp.text[:300]}")
            log.warning("attempt %d failed: %s", attempt, last_error)
            if attempt <= len(delays):
                self.sleep(delays[attempt - 1])
        raise GeneratorError(f"generation failed after {attempt} attempts: {last_error}")

    def _parse(self, data, conversation, start, attempts) -> GeneratorResponse:
        end = self.clock.now()
        try:
            content = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ValueError(f"malformed completion body: {exc!r}") from exc
        usage = data.get("usage") or {}
        prompt_tokens = usage.get("prompt_tokens")
        completion_tokens = usage.get("completion_tokens")
        if prompt_tokens is None or completion_tokens is None:
            prompt_tokens = estimate_tokens(sum(len(m.content) for m in conversation))
            completion_tokens = estimate_tokens(content)
        total = usage.get("total_tokens")
        if total is not None and total != prompt_tokens + completion_tokens:
            log.warning("backend total_tokens %s != prompt + completion", total)
        return GeneratorResponse(
            message=Message(Role.ASSISTANT, content, MessageKind.GENERATED, to_datetime(end)),
            model_identity=data.get("model") or self.spec.model,
            latency=end - start,
            tokens_prompt=int(prompt_tokens),
            tokens_completion=int(completion_tokens),
            attempts=attempts,
        )


def make_generator(spec, clock=None, sleep=time.sleep):
    if isinstance(spec, ScriptedGeneratorSpec):
        return ScriptedGenerator(spec, clock=clock, sleep=sleep)
    if isinstance(spec, ChatHTTPGeneratorSpec):
        return ChatHTTPGenerator(spec, clock=clock, sleep=sleep)
    raise TypeError(f"unsupported generator spec {spec!r}")


def generate(conversation: Sequence[Message], spec, clock=None) -> GeneratorResponse:
    """One-shot call; scripted specs replay from their first response each time."""
    return make_generator(spec, clock=clock).generate(conversation)
