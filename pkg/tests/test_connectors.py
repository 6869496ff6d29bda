import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from evoloop.connectors import (
    ChatHTTPGenerator,
    GeneratorError,
    ScriptedGenerator,
    ScriptExhausted,
    backoff_delays,
    estimate_tokens,
    generate,
    render_wire_request,
)
from evoloop.model import ChatHTTPGeneratorSpec, Message, MessageKind, Role, ScriptedGeneratorSpec
from evoloop.runtime import LogicalClock

CONV = [
    Message(Role.SYSTEM, "be brief", MessageKind.SYSTEM),
    Message(Role.USER, "hello", MessageKind.INITIAL),
]


class StubBackend:
    """Tiny chat-completion server whose replies are queued per test."""

    def __init__(self):
        self.replies = []
        self.requests = []
        backend = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = self.rfile.read(int(self.headers["Content-Length"]))
                backend.requests.append((dict(self.headers), json.loads(body)))
                status, payload = backend.replies.pop(0) if backend.replies else (500, "empty")
                data = payload if isinstance(payload, str) else json.dumps(payload)
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.end_headers()
                self.wfile.write(data.encode())

            def log_message(self, *args):
                pass

        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_port}/v1/chat/completions"
        threading.Thread(target=self.server.serve_forever, daemon=True).start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def backend():
    b = StubBackend()
    yield b
    b.close()


def completion(text, usage=None):
    body = {"model": "stub-1", "choices": [{"message": {"role": "assistant", "content": text}}]}
    if usage:
        body["usage"] = usage
    return body


def make(backend, **kw):
    spec = ChatHTTPGeneratorSpec(endpoint=backend.url, model="m", api_key_env="TEST_KEY", **kw)
    sleeps = []
    return ChatHTTPGenerator(spec, clock=LogicalClock(), sleep=sleeps.append), sleeps


def test_wire_request_shape():
    spec = ChatHTTPGeneratorSpec(endpoint="http://x", model="m", temperature=0.3)
    assert render_wire_request(CONV, spec) == {
        "model": "m",
        "messages": [{"role": "system", "content": "be brief"}, {"role": "user", "content": "hello"}],
        "temperature": 0.3,
    }
    with pytest.raises(ValueError):
        render_wire_request([], spec)
    with pytest.raises(TypeError):
        render_wire_request(CONV, ScriptedGeneratorSpec(("a",)))


def test_http_success_with_usage_and_auth(backend, monkeypatch):
    monkeypatch.setenv("TEST_KEY", "sekrit")
    backend.replies.append((200, completion("hi there", {"prompt_tokens": 5, "completion_tokens": 2})))
    gen, _ = make(backend)
    resp = gen.generate(CONV)
    assert resp.message.content == "hi there" and resp.message.role is Role.ASSISTANT
    assert (resp.tokens_prompt, resp.tokens_completion, resp.tokens_total) == (5, 2, 7)
    assert resp.model_identity == "stub-1" and resp.attempts == 1
    headers, body = backend.requests[0]
    assert headers["Authorization"] == "Bearer sekrit"
    assert body["messages"][-1] == {"role": "user", "content": "hello"}


def test_http_estimates_tokens_without_usage(backend):
    backend.replies.append((200, completion("12345678")))
    gen, _ = make(backend)
    resp = gen.generate(CONV)
    assert resp.tokens_completion == 2
    assert resp.tokens_prompt == estimate_tokens(len("be brief") + len("hello"))


def test_http_retries_5xx_and_bad_json_with_backoff(backend):
    backend.replies += [(503, "busy"), (200, "not json"), (200, completion("ok"))]
    gen, sleeps = make(backend, max_retries=3)
    resp = gen.generate(CONV)
    assert resp.message.content == "ok" and resp.attempts == 3
    assert sleeps == [0.5, 1.0]


def test_http_gives_up_after_retries(backend):
    backend.replies += [(500, "x")] * 3
    gen, sleeps = make(backend, max_retries=2)
    with pytest.raises(GeneratorError):
        gen.generate(CONV)
    assert len(backend.requests) == 3 and sleeps == [0.5, 1.0]


def test_http_client_error_is_not_retried(backend):
    backend.replies += [(401, "nope"), (200, completion("never"))]
    gen, _ = make(backend, max_retries=3)
    with pytest.raises(GeneratorError, match="401"):
        gen.generate(CONV)
    assert len(backend.requests) == 1


def test_http_429_is_retried(backend):
    backend.replies += [(429, "slow down"), (200, completion("ok"))]
    gen, _ = make(backend, max_retries=1)
    assert gen.generate(CONV).attempts == 2


def test_http_unreachable_endpoint():
    spec = ChatHTTPGeneratorSpec(endpoint="http://127.0.0.1:9/none", model="m", max_retries=1, request_timeout=1)
    with pytest.raises(GeneratorError):
        ChatHTTPGenerator(spec, sleep=lambda s: None).generate(CONV)


def test_backoff_doubles_and_caps():
    assert backoff_delays(6) == [0.5, 1.0, 2.0, 4.0, 8.0, 8.0]


def test_scripted_replays_in_order_then_exhausts():
    gen = ScriptedGenerator(ScriptedGeneratorSpec(("a", "b")), clock=LogicalClock())
    assert [gen.generate(CONV).message.content for _ in range(2)] == ["a", "b"]
    with pytest.raises(ScriptExhausted):
        gen.generate(CONV)


def test_scripted_delay_uses_injected_sleep():
    slept = []
    gen = ScriptedGenerator(ScriptedGeneratorSpec(("a",), delay=0.25), sleep=slept.append)
    gen.generate(CONV)
    assert slept == [0.25]


def test_generate_rejects_conversation_not_ending_with_user():
    with pytest.raises(ValueError):
        generate(CONV[:1], ScriptedGeneratorSpec(("a",)))
