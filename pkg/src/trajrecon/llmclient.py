"""Text-completion HTTP client and an in-process mock endpoint.

The wire protocol is the OpenAI-style ``/v1/completions`` call::

    POST {base_url}{api_path}
    {"model": ..., "prompt": ..., "max_tokens": ..., "temperature": ...}

and the first ``choices[0].text`` of the reply is returned. With
``chat=True`` the prompt is wrapped as a single user message and
``choices[0].message.content`` is read instead.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Mapping

import httpx
import numpy as np

from .errors import (
    EndpointError,
    EndpointTimeoutError,
    HttpStatusError,
    MalformedResponseError,
    PortUnavailableError,
)

log = logging.getLogger(__name__)

ENV_BASE_URL = "TRAJRECON_LLM_BASE_URL"
ENV_AUTH_TOKEN = "TRAJRECON_LLM_TOKEN"


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str = "http://127.0.0.1:8000"
    api_path: str = "/v1/completions"
    model_name: str = "trajectory-model"
    max_new_tokens: int = 1024
    temperature: float = 0.0
    timeout_s: float = 60.0
    retries: int = 3
    backoff_s: float = 0.5
    chat: bool = False
    auth_token: str | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be > 0")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be > 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @property
    def url(self) -> str:
        return self.base_url.rstrip("/") + self.api_path

    def with_env(self, environ: Mapping[str, str] | None = None) -> LlmEndpointConfig:
        """Apply environment overrides for the base URL and auth token."""
        env = os.environ if environ is None else environ
        cfg = self
        if env.get(ENV_BASE_URL):
            cfg = replace(cfg, base_url=env[ENV_BASE_URL])
        if env.get(ENV_AUTH_TOKEN):
            cfg = replace(cfg, auth_token=env[ENV_AUTH_TOKEN])
        return cfg

    def public_dict(self) -> dict:
        """Config without secrets, safe for manifests and logs."""
        return {
            "base_url": self.base_url,
            "api_path": self.api_path,
            "model_name": self.model_name,
            "max_new_tokens": self.max_new_tokens,
            "temperature": self.temperature,
            "timeout_s": self.timeout_s,
            "retries": self.retries,
            "backoff_s": self.backoff_s,
            "chat": self.chat,
            "auth": self.auth_token is not None,
        }


@dataclass(frozen=True)
class RetryEvent:
    attempt: int
    reason: str
    delay_s: float


def request_body(prompt: str, cfg: LlmEndpointConfig) -> bytes:
    """Serialized request; identical inputs give identical bytes."""
    if cfg.chat:
        payload = {"model": cfg.model_name, "messages": [{"role": "user", "content": prompt}],
                   "max_tokens": cfg.max_new_tokens, "temperature": cfg.temperature}
    else:
        payload = {"model": cfg.model_name, "prompt": prompt,
                   "max_tokens": cfg.max_new_tokens, "temperature": cfg.temperature}
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def _extract_text(data, chat: bool) -> str:
    try:
        choice = data["choices"][0]
        text = choice["message"]["content"] if chat else choice["text"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponseError(f"response lacks the completion text field: {exc!r}") from exc
    if not isinstance(text, str):
        raise MalformedResponseError("completion text is not a string")
    return text


class CompletionClient:
    """Thread-safe completion client; one instance can serve many callers."""

    def __init__(self, cfg: LlmEndpointConfig, sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg
        self._sleep = sleep
        self._http = httpx.Client(timeout=cfg.timeout_s)
        self._lock = threading.Lock()
        self.retry_events: list[RetryEvent] = []

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> CompletionClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _headers(self) -> dict:
        h = {"Content-Type": "application/json"}
        if self.cfg.auth_token:
            h["Authorization"] = f"Bearer {self.cfg.auth_token}"
        return h

    def complete(self, prompt: str) -> str:
        """Send one prompt; retry transport errors and 5xx, never 4xx.

        Raises:
            EndpointTimeoutError: the final attempt timed out.
            HttpStatusError: non-2xx status after retries (or any 4xx).
            MalformedResponseError: the body has no completion text.
            EndpointError: other transport failures after retries.
        """
        if not prompt:
            raise ValueError("empty prompt")
        cfg = self.cfg
        body = request_body(prompt, cfg)
        headers = self._headers()
        last: EndpointError | None = None
        for attempt in range(cfg.retries + 1):
            if attempt:
                delay = cfg.backoff_s * 2 ** (attempt - 1)
                with self._lock:
                    self.retry_events.append(RetryEvent(attempt, str(last), delay))
                log.info("retrying completion (attempt %d) after %s", attempt + 1, last)
                self._sleep(delay)
            try:
                resp = self._http.post(cfg.url, content=body, headers=headers)
            except httpx.TimeoutException as exc:
                last = EndpointTimeoutError(f"timed out after {cfg.timeout_s} s")
                last.__cause__ = exc
                continue
            except httpx.TransportError as exc:
                last = EndpointError(f"transport error: {type(exc).__name__}")
                last.__cause__ = exc
                continue
            if resp.status_code >= 500:
                last = HttpStatusError(resp.status_code, resp.text[:200])
                continue
            if resp.status_code >= 300:
                raise HttpStatusError(resp.status_code, resp.text[:200])
            try:
                data = resp.json()
            except ValueError as exc:
                raise MalformedResponseError("response is not JSON") from exc
            return _extract_text(data, cfg.chat)
        assert last is not None
        raise last


def complete(prompt: str, cfg: LlmEndpointConfig) -> str:
    """One-shot convenience wrapper around :class:`CompletionClient`."""
    with CompletionClient(cfg) as client:
        return client.complete(prompt)


# ---------------------------------------------------------------- mock server

_ROWS_BLOCK = re.compile(r"\(\s*-?\d+(?:\s*,\s*-?\d+){6}\s*\)")


def echo_rows(prompt: str) -> str:
    """What an untuned base model tends to produce: the input rows again."""
    return ",\n".join(m.group(0) for m in _ROWS_BLOCK.finditer(prompt))


@dataclass
class MockBehavior:
    """Scripted reply policy for :class:`MockServer`.

    ``mode`` is one of ``echo`` (repeat the prompt's data rows), ``oracle``
    (look the prompt up in ``targets``; unknown prompts get 404) or
    ``fixed`` (always ``text``). ``fail_first`` requests answer
    ``fail_status``; after that, each request fails with probability
    ``fail_rate`` (seeded).
    """

    mode: str = "fixed"
    text: str = ""
    targets: dict[str, str] = field(default_factory=dict)
    latency_s: float = 0.0
    fail_first: int = 0
    fail_rate: float = 0.0
    fail_status: int = 500
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("echo", "oracle", "fixed"):
            raise ValueError(f"unknown mock mode {self.mode!r}")


class MockServer:
    """Local completion endpoint for tests and offline pipeline runs.

    Use as a context manager; ``base_url`` is valid once started.
    """

    def __init__(self, behavior: MockBehavior | None = None, host: str = "127.0.0.1", port: int = 0):
        self.behavior = behavior or MockBehavior()
        self.host = host
        self.port = port
        self.requests: list[bytes] = []
        self._lock = threading.Lock()
        self._count = 0
        self._rng = np.random.default_rng(self.behavior.seed)
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    @property
    def request_count(self) -> int:
        with self._lock:
            return self._count

    def start(self) -> MockServer:
        handler = _make_handler(self)
        try:
            self._server = ThreadingHTTPServer((self.host, self.port), handler)
        except OSError as exc:
            raise PortUnavailableError(f"cannot bind {self.host}:{self.port}: {exc}") from exc
        self._server.daemon_threads = True
        self.port = self._server.server_address[1]
        self._thread = threading.Thread(target=self._server.serve_forever, name="mock-llm", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> MockServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def _respond(self, body: bytes) -> tuple[int, dict]:
        b = self.behavior
        with self._lock:
            self.requests.append(body)
            self._count += 1
            n = self._count
            fail = n <= b.fail_first or (b.fail_rate > 0 and self._rng.random() < b.fail_rate)
        if b.latency_s:
            time.sleep(b.latency_s)
        if fail:
            return b.fail_status, {"error": {"message": "injected failure", "code": b.fail_status}}
        try:
            req = json.loads(body)
        except ValueError:
            return 400, {"error": {"message": "invalid JSON"}}
        chat = "messages" in req
        prompt = req["messages"][-1]["content"] if chat else req.get("prompt")
        if not isinstance(prompt, str):
            return 400, {"error": {"message": "missing prompt"}}
        if b.mode == "echo":
            text = echo_rows(prompt)
        elif b.mode == "oracle":
            if prompt not in b.targets:
                return 404, {"error": {"message": "prompt not in oracle table"}}
            text = b.targets[prompt]
        else:
            text = b.text
        choice = {"index": 0, "finish_reason": "stop"}
        if chat:
            choice["message"] = {"role": "assistant", "content": text}
        else:
            choice["text"] = text
        return 200, {"id": f"mock-{n}", "object": "chat.completion" if chat else "text_completion",
                     "model": req.get("model", ""), "choices": [choice]}


def _make_handler(server: MockServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def do_POST(self):  # noqa: N802
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            status, payload = server._respond(body)
            out = json.dumps(payload).encode("utf-8")
            try:
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(out)))
                self.end_headers()
                self.wfile.write(out)
            except (BrokenPipeError, ConnectionResetError):
                pass

        def log_message(self, fmt, *args):
            log.debug("mock-llm: " + fmt, *args)

    return Handler
