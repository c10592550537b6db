"""OpenAI-compatible ``/chat/completions`` backend."""

from __future__ import annotations

import os

import httpx

from .types import ChatRequest, ChatResponse, PermanentError, RetryableError

BASE_URL_ENV = "RRR_BASE_URL"
API_KEY_ENV = "RRR_API_KEY"
DEFAULT_BASE_URL = "https://api.openai.com/v1"


class OpenAIChatBackend:
    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV)
                         or os.environ.get("OPENAI_BASE_URL") or DEFAULT_BASE_URL).rstrip("/")
        self.api_key = api_key or os.environ.get(API_KEY_ENV) or os.environ.get("OPENAI_API_KEY")
        if not self.api_key:
            raise ValueError(f"no API key: set {API_KEY_ENV} (or OPENAI_API_KEY)")
        self.client = httpx.Client(timeout=timeout, transport=transport)

    def __call__(self, request: ChatRequest) -> ChatResponse:
        try:
            resp = self.client.post(
                f"{self.base_url}/chat/completions",
                headers={"Authorization": f"Bearer {self.api_key}"},
                json=request.to_openai(),
            )
        except httpx.TransportError as exc:
            raise RetryableError(f"transport error: {exc}") from exc

        if resp.status_code == 429 or resp.status_code >= 500:
            raise RetryableError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise PermanentError(resp.status_code, resp.text)

        try:
            data = resp.json()
            content = data["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise RetryableError(f"malformed completion payload: {exc}") from exc
        usage = data.get("usage") or {}
        return ChatResponse(
            content=content,
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
        )

    def close(self) -> None:
        self.client.close()
