from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

ROLES = ("system", "user", "assistant")


class LLMError(RuntimeError):
    """Base for backend failures."""


class RetryableError(LLMError):
    """Transport failure, 429 or 5xx; the gateway retries these."""


class TransportError(LLMError):
    """Retries exhausted."""


class PermanentError(LLMError):
    """Non-retryable 4xx. ``body`` holds the server's response text."""

    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:500]}")
        self.status = status
        self.body = body


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_output_tokens: int | None = None

    def __post_init__(self):
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        object.__setattr__(self, "messages", tuple(self.messages))

    def key(self) -> str:
        payload = {
            "model": self.model,
            "messages": [[m.role, m.content] for m in self.messages],
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
        }
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def to_openai(self) -> dict:
        body = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
        }
        if self.max_output_tokens is not None:
            body["max_tokens"] = self.max_output_tokens
        return body


@dataclass(frozen=True)
class ChatResponse:
    content: str
    input_tokens: int = 0
    output_tokens: int = 0
    cached: bool = False

    def to_dict(self) -> dict:
        return asdict(self)
