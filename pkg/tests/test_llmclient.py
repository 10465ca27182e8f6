from __future__ import annotations

import json
import logging
import socket

import httpx
import pytest

from trajrecon.errors import (
    EndpointError,
    EndpointTimeoutError,
    HttpStatusError,
    MalformedResponseError,
    PortUnavailableError,
)
from trajrecon.llmclient import (
    ENV_AUTH_TOKEN,
    ENV_BASE_URL,
    CompletionClient,
    LlmEndpointConfig,
    MockBehavior,
    MockServer,
    complete,
    echo_rows,
    request_body,
)

PROMPT = "rows:\n(1, 2, 3, 4, 5, 6, 7),\n(8, 9, 10, 11, 12, 13, 14)\n- - - - - - -\nSummary:"
SECRET = "sk-test-7f3a9c0e1b"


def client_for(srv: MockServer, **kw) -> CompletionClient:
    cfg = LlmEndpointConfig(base_url=srv.base_url, backoff_s=0.01, **kw)
    return CompletionClient(cfg, sleep=lambda _s: None)


def test_fixed_reply():
    with MockServer(MockBehavior(text="(0, 0, 0, 0, 0, 0, 0)")) as srv:
        assert complete(PROMPT, LlmEndpointConfig(base_url=srv.base_url)) == "(0, 0, 0, 0, 0, 0, 0)"
        req = json.loads(srv.requests[0])
    assert req["prompt"] == PROMPT
    assert req["temperature"] == 0.0 and req["max_tokens"] == 1024


def test_echo_mode_repeats_rows():
    with MockServer(MockBehavior(mode="echo")) as srv, client_for(srv) as c:
        assert c.complete(PROMPT) == echo_rows(PROMPT)
    assert echo_rows(PROMPT).count("(") == 2


def test_oracle_unknown_prompt_is_4xx_without_retry():
    with MockServer(MockBehavior(mode="oracle", targets={"x": "y"})) as srv, client_for(srv) as c:
        with pytest.raises(HttpStatusError) as exc:
            c.complete(PROMPT)
        assert exc.value.code == 404
        assert srv.request_count == 1
        assert c.complete("x") == "y"


def test_transient_5xx_then_success_with_identical_bodies():
    with MockServer(MockBehavior(text="ok", fail_first=2, fail_status=503)) as srv, client_for(srv) as c:
        assert c.complete(PROMPT) == "ok"
        assert srv.request_count == 3
        assert len(set(srv.requests)) == 1
    assert [e.attempt for e in c.retry_events] == [1, 2]
    assert [e.delay_s for e in c.retry_events] == [0.01, 0.02]


def test_persistent_errors_surface_after_retries():
    with MockServer(MockBehavior(fail_rate=1.0)) as srv, client_for(srv, retries=2) as c:
        with pytest.raises(HttpStatusError) as exc:
            c.complete(PROMPT)
        assert srv.request_count == 3
    assert exc.value.code == 500
    assert isinstance(exc.value, EndpointError)


def test_client_4xx_is_not_retried():
    with MockServer(MockBehavior(fail_first=5, fail_status=422)) as srv, client_for(srv) as c:
        with pytest.raises(HttpStatusError):
            c.complete(PROMPT)
        assert srv.request_count == 1


def test_timeout():
    with MockServer(MockBehavior(text="late", latency_s=0.5)) as srv, client_for(srv, timeout_s=0.1, retries=1) as c:
        with pytest.raises(EndpointTimeoutError):
            c.complete(PROMPT)
        assert len(c.retry_events) == 1


def test_connection_refused_is_endpoint_error():
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
    cfg = LlmEndpointConfig(base_url=f"http://127.0.0.1:{port}", retries=1, backoff_s=0)
    with CompletionClient(cfg, sleep=lambda _s: None) as c:
        with pytest.raises(EndpointError):
            c.complete(PROMPT)


def test_chat_mode():
    with MockServer(MockBehavior(text="hello")) as srv, client_for(srv, chat=True, api_path="/v1/chat/completions") as c:
        assert c.complete(PROMPT) == "hello"
        req = json.loads(srv.requests[0])
    assert req["messages"] == [{"role": "user", "content": PROMPT}]


@pytest.mark.parametrize("body", [b"not json", b'{"choices": []}', b'{"choices": [{"text": 3}]}'])
def test_malformed_response(body):
    c = CompletionClient(LlmEndpointConfig(), sleep=lambda _s: None)
    c._http = httpx.Client(transport=httpx.MockTransport(lambda req: httpx.Response(200, content=body)))
    with c, pytest.raises(MalformedResponseError):
        c.complete(PROMPT)


def test_request_body_is_deterministic():
    cfg = LlmEndpointConfig()
    assert request_body(PROMPT, cfg) == request_body(PROMPT, cfg)
    assert request_body(PROMPT, cfg) != request_body(PROMPT, LlmEndpointConfig(chat=True))


def test_config_validation():
    for bad in ({"timeout_s": 0}, {"retries": -1}, {"max_new_tokens": 0}, {"temperature": -0.1}):
        with pytest.raises(ValueError):
            LlmEndpointConfig(**bad)
    with pytest.raises(ValueError):
        MockBehavior(mode="creative")
    with pytest.raises(ValueError):
        CompletionClient(LlmEndpointConfig()).complete("")


def test_env_override_and_secret_hygiene(caplog):
    cfg = LlmEndpointConfig().with_env({ENV_BASE_URL: "http://example.invalid:9", ENV_AUTH_TOKEN: SECRET})
    assert cfg.base_url == "http://example.invalid:9"
    assert cfg.auth_token == SECRET
    assert SECRET not in repr(cfg)
    assert SECRET not in json.dumps(cfg.public_dict())
    assert cfg.public_dict()["auth"] is True
    assert LlmEndpointConfig().with_env({}) == LlmEndpointConfig()

    seen = []

    def handler(req: httpx.Request) -> httpx.Response:
        seen.append(req.headers.get("authorization"))
        return httpx.Response(500, text="upstream down")

    caplog.set_level(logging.DEBUG)
    c = CompletionClient(cfg, sleep=lambda _s: None)
    c._http = httpx.Client(transport=httpx.MockTransport(handler))
    with c, pytest.raises(HttpStatusError) as exc:
        c.complete(PROMPT)
    assert seen == [f"Bearer {SECRET}"] * 4
    assert SECRET not in str(exc.value)
    assert SECRET not in caplog.text
    assert all(SECRET not in e.reason for e in c.retry_events)


def test_port_unavailable():
    with MockServer() as srv:
        with pytest.raises(PortUnavailableError):
            MockServer(port=srv.port).start()


def test_concurrent_requests_share_one_client():
    from concurrent.futures import ThreadPoolExecutor

    with MockServer(MockBehavior(mode="echo", latency_s=0.05)) as srv, client_for(srv) as c:
        prompts = [f"({i}, 0, 0, 0, 0, 0, 0)" for i in range(16)]
        with ThreadPoolExecutor(8) as pool:
            out = list(pool.map(c.complete, prompts))
        assert out == prompts
        assert srv.request_count == 16
