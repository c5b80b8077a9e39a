"""Chat-completion client with retries and a fixture-replay transport.

Requests are serialised canonically (sorted keys, compact separators), so
the SHA-256 of the body identifies a request across runs. Fixture
directories hold one ``<hash>.txt`` file per recorded answer.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .errors import ConfigError, FixtureMissError, ProtocolError, TransportError

logger = logging.getLogger(__name__)

ROLES = ("system", "user")


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple((str(r), str(c)) for r, c in self.messages))
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        for role, _ in self.messages:
            if role not in ROLES:
                raise ValueError(f"unsupported role {role!r}")
        if not 0 <= self.temperature <= 2:
            raise ValueError("temperature must lie in [0, 2]")

    def payload(self) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
        }

    def canonical(self) -> bytes:
        return canonical_json(self.payload())

    def digest(self) -> str:
        return hashlib.sha256(self.canonical()).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: str
    latency_ms: int


@dataclass(frozen=True)
class GatewayConfig:
    base_url: str | None = None
    api_key: str | None = field(default=None, repr=False)
    model: str = "gpt-4"
    timeout_ms: int = 30000
    max_retries: int = 3
    backoff_base_s: float = 0.5
    backoff_cap_s: float = 8.0
    jitter: float = 0.1
    fixture_dir: str | None = None
    require_api_key: bool = True

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @classmethod
    def from_env(cls, env: dict | None = None, **overrides) -> "GatewayConfig":
        env = os.environ if env is None else env
        values = {
            "base_url": env.get("LLM_API_URL") or None,
            "api_key": env.get("LLM_API_KEY") or None,
            "model": env.get("LLM_MODEL") or "gpt-4",
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def request_digest(body: bytes) -> str:
    """Hash of a request body after re-canonicalising it."""
    try:
        return hashlib.sha256(canonical_json(json.loads(body))).hexdigest()
    except ValueError:
        return hashlib.sha256(body).hexdigest()


def completion_payload(content: str, finish_reason: str = "stop") -> dict:
    return {
        "object": "chat.completion",
        "choices": [{"index": 0, "finish_reason": finish_reason, "message": {"role": "assistant", "content": content}}],
    }


def load_fixture_transport(directory: str | Path) -> httpx.MockTransport:
    """Transport answering each request from ``<directory>/<hash>.txt``.

    A request with no recorded answer raises :class:`FixtureMissError`
    naming the hash.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"fixture directory {directory} does not exist")

    def handler(request: httpx.Request) -> httpx.Response:
        digest = request_digest(request.content)
        path = directory / f"{digest}.txt"
        if not path.is_file():
            raise FixtureMissError(digest, str(directory))
        return httpx.Response(200, json=completion_payload(path.read_text(encoding="utf-8")))

    return httpx.MockTransport(handler)


def record_fixture(directory: str | Path, req: ChatRequest, content: str) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{req.digest()}.txt"
    path.write_text(content, encoding="utf-8")
    return path


def _parse_completion(resp: httpx.Response) -> tuple[str, str]:
    try:
        doc = resp.json()
        choice = doc["choices"][0]
        content = choice["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"malformed chat-completion response: {exc!r}") from exc
    if not isinstance(content, str):
        raise ProtocolError("chat-completion content is not text")
    return content, str(choice.get("finish_reason") or "stop")


def _backoff(attempt: int, cfg: GatewayConfig, rng: random.Random) -> float:
    delay = min(cfg.backoff_cap_s, cfg.backoff_base_s * 2 ** attempt)
    return max(0.0, delay * (1 + rng.uniform(-cfg.jitter, cfg.jitter)))


def _endpoint(base_url: str) -> str:
    base = base_url.rstrip("/")
    return base if base.endswith("/chat/completions") else base + "/chat/completions"


def send_chat(
    req: ChatRequest,
    cfg: GatewayConfig,
    transport: httpx.BaseTransport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> ChatResponse:
    """POST one chat request; retry 429, 5xx and timeouts with backoff.

    Other 4xx statuses fail at once: 401/403 as :class:`ConfigError`, the
    rest as :class:`TransportError`.
    """
    if transport is None and cfg.fixture_dir:
        transport = load_fixture_transport(cfg.fixture_dir)
    base_url = cfg.base_url or ("http://fixtures.invalid" if cfg.fixture_dir else None)
    if not base_url:
        raise ConfigError("LLM_API_URL is not set")
    if transport is None and cfg.require_api_key and not cfg.api_key:
        raise ConfigError("LLM_API_KEY is not set")
    rng = rng or random.Random(0)

    headers = {"Content-Type": "application/json"}
    if cfg.api_key:
        headers["Authorization"] = f"Bearer {cfg.api_key}"
    body = req.canonical()
    url = _endpoint(base_url)
    timeout = httpx.Timeout(cfg.timeout_ms / 1000.0)

    with httpx.Client(transport=transport, timeout=timeout) as client:
        for attempt in range(cfg.max_retries + 1):
            started = time.monotonic()
            try:
                resp = client.post(url, content=body, headers=headers)
            except httpx.TimeoutException as exc:
                problem = f"timeout: {exc}"
            except httpx.TransportError as exc:
                problem = f"connection error: {exc}"
            else:
                status = resp.status_code
                if status == 200:
                    content, finish = _parse_completion(resp)
                    return ChatResponse(content, finish, int((time.monotonic() - started) * 1000))
                if status in (401, 403):
                    raise ConfigError(f"endpoint rejected credentials (HTTP {status})")
                if status != 429 and status < 500:
                    raise TransportError(f"endpoint returned HTTP {status}: {resp.text[:200]}")
                problem = f"HTTP {status}"
            if attempt == cfg.max_retries:
                raise TransportError(f"giving up after {cfg.max_retries} retries: {problem}")
            delay = _backoff(attempt, cfg, rng)
            logger.warning("chat request failed (%s); retry %d/%d in %.2fs", problem, attempt + 1, cfg.max_retries, delay)
            sleep(delay)
    raise AssertionError("unreachable")


def chat(prompt: str, cfg: GatewayConfig, system: str | None = None, transport: httpx.BaseTransport | None = None,
         sleep: Callable[[float], None] = time.sleep) -> ChatResponse:
    messages: Sequence[tuple[str, str]] = ([("system", system)] if system else []) + [("user", prompt)]
    return send_chat(ChatRequest(cfg.model, tuple(messages), 0.0), cfg, transport=transport, sleep=sleep)
