"""The one place generative-model calls go through: cache, retries, ledger."""

from __future__ import annotations

import contextlib
import contextvars
import logging
import random
import threading
import time
from typing import Callable, Iterator

from .cache import CallCache
from .ledger import CallRecord, CostLedger, CostReport
from .types import ChatRequest, ChatResponse, RetryableError, TransportError

log = logging.getLogger(__name__)

Backend = Callable[[ChatRequest], ChatResponse]

_recorder: contextvars.ContextVar[list[CallRecord] | None] = contextvars.ContextVar("rrr_calls", default=None)


class Gateway:
    def __init__(
        self,
        backend: Backend,
        cache: CallCache | None = None,
        ledger: CostLedger | None = None,
        retries: int = 5,
        backoff_base: float = 1.0,
        jitter: bool = True,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.cache = cache if cache is not None else CallCache()
        self.ledger = ledger if ledger is not None else CostLedger()
        self.retries = retries
        self.backoff_base = backoff_base
        self.jitter = jitter
        self.sleep = sleep
        self.backend_calls = 0
        self.retry_count = 0
        self._lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}

    def _key_lock(self, key: str) -> threading.Lock:
        with self._lock:
            return self._key_locks.setdefault(key, threading.Lock())

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = request.key()
        # one in-flight backend call per distinct request
        with self._key_lock(key):
            hit = self.cache.get(key)
            if hit is not None:
                resp = ChatResponse(hit.content, hit.input_tokens, hit.output_tokens, cached=True)
                self._record(CallRecord(request.model, key, True, hit.input_tokens, hit.output_tokens))
                return resp
            resp, retries = self._call_with_retries(request)
            self.cache.put(key, resp)
        self._record(CallRecord(request.model, key, False, resp.input_tokens, resp.output_tokens, retries))
        return resp

    def _call_with_retries(self, request: ChatRequest) -> tuple[ChatResponse, int]:
        attempt = 0
        while True:
            with self._lock:
                self.backend_calls += 1
            try:
                resp = self.backend(request)
                return ChatResponse(resp.content, resp.input_tokens, resp.output_tokens), attempt
            except RetryableError as exc:
                if attempt >= self.retries:
                    raise TransportError(f"giving up after {attempt + 1} attempts: {exc}") from exc
                delay = self.backoff_base * 2**attempt
                if self.jitter:
                    delay *= random.uniform(0.5, 1.5)
                log.warning("retrying %s in %.2fs (%s)", request.model, delay, exc)
                attempt += 1
                with self._lock:
                    self.retry_count += 1
                self.sleep(delay)

    def _record(self, call: CallRecord) -> None:
        self.ledger.record(call)
        calls = _recorder.get()
        if calls is not None:
            calls.append(call)

    def ledger_report(self) -> CostReport:
        return self.ledger.report()

    @contextlib.contextmanager
    def recording(self) -> Iterator[list[CallRecord]]:
        """Collect every call made in this context (threads started via
        ``contextvars.copy_context`` included)."""
        calls: list[CallRecord] = []
        token = _recorder.set(calls)
        try:
            yield calls
        finally:
            _recorder.reset(token)
