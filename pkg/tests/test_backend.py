import json
import re
import socket
import threading
import time

import httpx
import pytest

from claimkit.backend import (
    ChatRequest,
    MockBackend,
    MockRule,
    OpenAIBackend,
    ResponseCache,
    cache_key,
    load_mock_script,
    parse_mock_rules,
)
from claimkit.errors import ApiError, BudgetExceeded, ConfigError, NoScriptMatch, TransportError


def _ok(content="hi"):
    return httpx.Response(200, json={"model": "m", "choices": [{"message": {"content": content}}],
                                     "usage": {"prompt_tokens": 3, "completion_tokens": 1}})


class Scripted:
    """MockTransport handler replaying a list of responses or exceptions."""

    def __init__(self, *outcomes):
        self.outcomes = list(outcomes)
        self.requests = []

    def __call__(self, request):
        self.requests.append(request)
        item = self.outcomes.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def _client(handler, **kw):
    sleeps = []
    b = OpenAIBackend("http://llm.test/", "m", api_key="k", transport=httpx.MockTransport(handler),
                      sleep=sleeps.append, **kw)
    return b, sleeps


REQ = ChatRequest.from_prompt("hello", "m")


def test_openai_request_shape():
    handler = Scripted(_ok("yes"))
    b, _ = _client(handler)
    resp = b.complete(ChatRequest.from_prompt("hello", "m", temperature=0.4, max_tokens=7))
    assert resp.content == "yes" and resp.usage == {"prompt_tokens": 3, "completion_tokens": 1}
    sent = handler.requests[0]
    assert str(sent.url) == "http://llm.test/v1/chat/completions"
    assert sent.headers["authorization"] == "Bearer k"
    assert json.loads(sent.content) == {
        "model": "m",
        "messages": [{"role": "user", "content": "hello"}],
        "temperature": 0.4,
        "max_tokens": 7,
    }


@pytest.mark.parametrize("status", [429, 500, 503])
def test_retry_then_success(status):
    handler = Scripted(httpx.Response(status, text="busy"), httpx.Response(status, text="busy"), _ok())
    b, sleeps = _client(handler)
    assert b.complete(REQ).content == "hi"
    assert sleeps == [1.0, 2.0]
    assert b.calls == 1


def test_retries_exhausted_raise_api_error():
    handler = Scripted(*(httpx.Response(502, text="bad gateway") for _ in range(3)))
    b, sleeps = _client(handler)
    with pytest.raises(ApiError) as err:
        b.complete(REQ)
    assert err.value.status == 502 and len(handler.requests) == 3 and sleeps == [1.0, 2.0]


def test_transport_errors_are_retried():
    handler = Scripted(httpx.ConnectError("refused"), httpx.ReadTimeout("slow"), httpx.ConnectError("refused"))
    b, _ = _client(handler)
    with pytest.raises(TransportError):
        b.complete(REQ)
    assert len(handler.requests) == 3


def test_client_errors_are_not_retried():
    handler = Scripted(httpx.Response(400, text="bad"), _ok())
    b, sleeps = _client(handler)
    with pytest.raises(ApiError):
        b.complete(REQ)
    assert len(handler.requests) == 1 and sleeps == []


def test_malformed_body_is_api_error():
    b, _ = _client(Scripted(httpx.Response(200, json={"choices": []})))
    with pytest.raises(ApiError):
        b.complete(REQ)


def test_from_env(monkeypatch):
    monkeypatch.delenv("CLAIM_API_BASE", raising=False)
    with pytest.raises(ConfigError):
        OpenAIBackend.from_env("m")
    monkeypatch.setenv("CLAIM_API_BASE", "http://x")
    assert OpenAIBackend.from_env("m").url == "http://x/v1/chat/completions"


# -- cache --------------------------------------------------------------------


def test_cache_key_covers_request_fields():
    base = cache_key("b", REQ)
    assert base == cache_key("b", ChatRequest.from_prompt("hello", "m"))
    assert base != cache_key("other", REQ)
    assert base != cache_key("b", ChatRequest.from_prompt("hello", "m2"))
    assert base != cache_key("b", ChatRequest.from_prompt("hello", "m", temperature=0.0))
    assert base != cache_key("b", ChatRequest.from_prompt("hello", "m", max_tokens=5))


def test_cache_hit_skips_network(tmp_path):
    handler = Scripted(_ok("first"))
    b, _ = _client(handler, cache=ResponseCache(tmp_path / "c.jsonl"))
    assert b.complete(REQ).content == "first"
    again = b.complete(REQ)
    assert again.content == "first" and again.cached
    assert (b.calls, b.cache_hits, len(handler.requests)) == (1, 1, 1)

    # a fresh process sees the same entry
    b2, _ = _client(Scripted(), cache=ResponseCache(tmp_path / "c.jsonl"))
    assert b2.complete(REQ).content == "first" and b2.calls == 0


def test_corrupt_tail_is_truncated(tmp_path):
    path = tmp_path / "c.jsonl"
    cache = ResponseCache(path)
    mock = MockBackend([("hello", "world")], cache=cache)
    mock.complete(REQ)
    good = path.read_bytes()
    path.write_bytes(good + b'{"key": "abc", "respo')
    reloaded = ResponseCache(path)
    assert len(reloaded) == 1
    assert path.read_bytes() == good
    reloaded.put("k2", REQ, mock.complete(ChatRequest.from_prompt("hello again", "mock")))
    assert all(json.loads(line) for line in path.read_text().splitlines())


def test_budget_counts_only_real_calls(tmp_path):
    b = MockBackend([("", "ok")], cache=ResponseCache(tmp_path / "c.jsonl"), max_requests=2)
    b.complete(ChatRequest.from_prompt("a", "mock"))
    b.complete(ChatRequest.from_prompt("a", "mock"))
    b.complete(ChatRequest.from_prompt("b", "mock"))
    with pytest.raises(BudgetExceeded):
        b.complete(ChatRequest.from_prompt("c", "mock"))
    assert (b.calls, b.cache_hits) == (2, 1)


def test_in_flight_limit():
    active = 0
    peak = 0
    lock = threading.Lock()

    class Slow(MockBackend):
        def _send(self, req):
            nonlocal active, peak
            with lock:
                active += 1
                peak = max(peak, active)
            time.sleep(0.02)
            with lock:
                active -= 1
            return super()._send(req)

    b = Slow([("", "ok")], max_in_flight=2)
    threads = [threading.Thread(target=b.complete, args=(ChatRequest.from_prompt(str(i), "mock"),)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak <= 2 and b.calls == 8


# -- mock ---------------------------------------------------------------------


def test_mock_first_match_wins():
    b = MockBackend([MockRule(re.compile(r"^ab"), "regex"), ("abc", "substring"), ("", "fallback")])
    assert b.complete(ChatRequest.from_prompt("abc", "mock")).content == "regex"
    assert b.complete(ChatRequest.from_prompt("xabc", "mock")).content == "substring"
    assert b.complete(ChatRequest.from_prompt("zzz", "mock")).content == "fallback"
    assert b.prompts == ["abc", "xabc", "zzz"]


def test_mock_no_match():
    b = MockBackend([("needle", "x")])
    with pytest.raises(NoScriptMatch) as err:
        b.complete(ChatRequest.from_prompt("haystack", "mock"))
    assert len(err.value.prompt_digest) == 16


def test_mock_does_no_network_io(monkeypatch):
    def refuse(*a, **k):
        raise AssertionError("network used")

    monkeypatch.setattr(socket, "socket", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)
    assert MockBackend([("", "fine")]).complete(REQ).content == "fine"


def test_mock_script_parsing(tmp_path, mock_dir):
    with pytest.raises(ConfigError):
        parse_mock_rules({"rules": [{"response": "x"}]})
    with pytest.raises(ConfigError):
        MockBackend([])
    b = load_mock_script(mock_dir / "worked_example.json")
    assert len(b.rules) == 5 and b.backend_id.startswith("mock:")
    assert b.backend_id == load_mock_script(mock_dir / "worked_example.json").backend_id
    assert b.backend_id != load_mock_script(mock_dir / "detector_no.json").backend_id


def test_request_validation():
    with pytest.raises(ValueError):
        ChatRequest("m", ())
    with pytest.raises(ValueError):
        ChatRequest.from_prompt("x", "m", temperature=3.0)
    with pytest.raises(ValueError):
        ChatRequest("m", ({"role": "user", "content": "a"}, {"role": "system", "content": "b"}))
