"""Persistent completion cache: an append-only JSONL file plus an in-memory map."""

from __future__ import annotations

import json
import logging
import threading
from pathlib import Path

from .types import ChatResponse

log = logging.getLogger(__name__)


class CallCache:
    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._entries: dict[str, ChatResponse] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                try:
                    record = json.loads(line)
                    resp = record["response"]
                    self._entries[record["key"]] = ChatResponse(
                        content=resp["content"],
                        input_tokens=int(resp["input_tokens"]),
                        output_tokens=int(resp["output_tokens"]),
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    # a torn final write after a crash; everything before it is intact
                    log.warning("%s:%d: skipping unreadable cache record", self.path, lineno)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def get(self, key: str) -> ChatResponse | None:
        return self._entries.get(key)

    def put(self, key: str, response: ChatResponse) -> None:
        stored = ChatResponse(response.content, response.input_tokens, response.output_tokens)
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = stored
            if self.path:
                record = {
                    "key": key,
                    "response": {
                        "content": stored.content,
                        "input_tokens": stored.input_tokens,
                        "output_tokens": stored.output_tokens,
                    },
                }
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")
