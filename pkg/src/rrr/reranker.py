"""Listwise sliding-window re-ranking with permutation prompts."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import Document, ScoredList
from .llm.gateway import Gateway
from .llm.types import ChatRequest, Message, PermanentError
from .prompts import template

_BRACKET = re.compile(r"\[(\d+)\]")


def window_starts(n: int, w: int, s: int) -> list[int]:
    """Window start offsets in processing order (tail first).

    Windows step back from ``n - w`` by ``s``. When ``(n - w) % s`` leaves a
    remainder, the last window is anchored at position 0 instead of at the
    remainder, so the head is never skipped and the count stays at
    ``(n - w) // s + 1``.

    A single pass carries the best item to the head only when consecutive
    windows overlap (``2 * s <= w``) and the list is not in ``(w, w + s)``,
    where the count allows one window that cannot reach the tail.
    """
    if not 1 <= s <= w:
        raise ValueError(f"need 1 <= s <= w, got s={s}, w={w}")
    if n <= w:
        return [0]
    starts = [n - w - i * s for i in range((n - w) // s + 1)]
    starts[-1] = 0
    return starts


def window_count(n: int, w: int, s: int) -> int:
    return 1 if n <= w else (n - w) // s + 1


def permutation_request(query: str, passages: Sequence[str], model: str) -> ChatRequest:
    num = len(passages)
    messages = [
        Message("system", template("rerank_system")),
        Message("user", template("rerank_intro").format(num=num, query=query)),
        Message("assistant", template("rerank_ready")),
    ]
    for rank, passage in enumerate(passages, 1):
        messages.append(Message("user", f"[{rank}] {passage}"))
        messages.append(Message("assistant", template("rerank_ack").format(rank=rank)))
    messages.append(Message("user", template("rerank_final").format(num=num)))
    return ChatRequest(model=model, messages=tuple(messages))


def parse_permutation(content: str, size: int) -> tuple[list[int], str | None]:
    """Parse ``[i] > [j] > ...`` into a full 1-based permutation of ``size``.

    Out-of-range and repeated ids are dropped, missing ids are appended in
    their original order. Returns the permutation and a warning, if any repair
    was needed.
    """
    raw = [int(x) for x in _BRACKET.findall(content)]
    order: list[int] = []
    for i in raw:
        if 1 <= i <= size and i not in order:
            order.append(i)
    if not order:
        return list(range(1, size + 1)), f"no usable ranking in output, kept input order: {content[:200]!r}"
    missing = [i for i in range(1, size + 1) if i not in order]
    warning = None
    if missing or len(order) != len(raw):
        warning = f"repaired ranking {content[:200]!r} -> {order + missing}"
    return order + missing, warning


@dataclass
class RerankResult:
    ranked: list[str]
    calls: int = 0
    warnings: list[str] = field(default_factory=list)
    permutations: list[dict] = field(default_factory=list)


class SlidingWindowReranker:
    def __init__(
        self,
        gateway: Gateway,
        documents: Mapping[str, Document],
        window: int = 10,
        step: int = 5,
    ):
        if not 1 <= step <= window:
            raise ValueError(f"need 1 <= step <= window, got step={step}, window={window}")
        self.gateway = gateway
        self.documents = documents
        self.window = window
        self.step = step

    def window_permute(self, query: str, doc_ids: Sequence[str], model: str) -> tuple[list[int], str | None]:
        if not 1 <= len(doc_ids) <= self.window:
            raise ValueError(f"window holds {len(doc_ids)} docs, limit is {self.window}")
        passages = [self.documents[d].render() for d in doc_ids]
        try:
            resp = self.gateway.complete(permutation_request(query, passages, model))
        except PermanentError as exc:
            return list(range(1, len(doc_ids) + 1)), f"backend rejected window ({exc.status}), kept input order"
        return parse_permutation(resp.content, len(doc_ids))

    def sliding_rerank(self, query: str, doc_ids: Sequence[str], model: str) -> RerankResult:
        if not doc_ids:
            raise ValueError("cannot re-rank an empty list")
        items = list(doc_ids)
        result = RerankResult(ranked=items)
        for start in window_starts(len(items), self.window, self.step):
            end = min(start + self.window, len(items))
            chunk = items[start:end]
            perm, warning = self.window_permute(query, chunk, model)
            items[start:end] = [chunk[i - 1] for i in perm]
            result.calls += 1
            result.permutations.append({"model": model, "start": start, "order": perm})
            if warning:
                result.warnings.append(f"window {start}:{end} ({model}): {warning}")
        return result

    def two_phase_rerank(
        self,
        query: str,
        doc_ids: Sequence[str],
        cheap_model: str,
        strong_model: str,
        strong_depth: int = 30,
    ) -> RerankResult:
        """Cheap model over the whole list, then the strong model over its head."""
        first = self.sliding_rerank(query, doc_ids, cheap_model)
        depth = min(strong_depth, len(first.ranked))
        second = self.sliding_rerank(query, first.ranked[:depth], strong_model)
        return RerankResult(
            ranked=second.ranked + first.ranked[depth:],
            calls=first.calls + second.calls,
            warnings=first.warnings + second.warnings,
            permutations=first.permutations + second.permutations,
        )


def positional_scores(doc_ids: Sequence[str]) -> ScoredList:
    """Strictly decreasing scores so run files keep this exact order."""
    n = len(doc_ids)
    return [(d, float(n - i)) for i, d in enumerate(doc_ids)]
