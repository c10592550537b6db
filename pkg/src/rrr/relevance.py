"""Ordinal 1-5 LLM relevance scoring, threshold filtering and relevance ordering."""

from __future__ import annotations

import contextvars
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import Document, ScoredList
from .llm.gateway import Gateway
from .llm.types import ChatRequest, Message, PermanentError
from .prompts import template

_TAG = re.compile(r"<Score>\s*(-?\d+)\s*</Score>", re.IGNORECASE)
_LONE_DIGIT = re.compile(r"(?<!\d)(?<!\d\.)([1-5])(?!\d)(?!\.\d)")


class ScoringError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(f"{message}: {raw!r}")
        self.raw = raw


def relevance_request(query: str, document: str, model: str) -> ChatRequest:
    return ChatRequest(
        model=model,
        messages=(
            Message("system", template("system")),
            Message("user", template("relevance").format(query=query, document=document)),
        ),
    )


def parse_score(content: str) -> int:
    m = _TAG.search(content)
    if m:
        value = int(m.group(1))
        if not 1 <= value <= 5:
            raise ScoringError(f"score {value} outside 1..5", content)
        return value
    # repair: accept exactly one bare digit in range
    digits = set(_LONE_DIGIT.findall(content))
    if len(digits) == 1:
        return int(digits.pop())
    raise ScoringError("unparseable relevance score", content)


@dataclass(frozen=True)
class Judgment:
    doc_id: str
    retrieval_score: float
    grade: int | None
    error: str | None = None


@dataclass
class FilteredList:
    kept: list[Judgment] = field(default_factory=list)
    dropped: list[Judgment] = field(default_factory=list)

    def grades(self) -> dict[str, int | None]:
        return {j.doc_id: j.grade for j in (*self.kept, *self.dropped)}


class RelevanceModel:
    """Scores documents against a query, one memoized LLM call per (query, doc)."""

    def __init__(
        self,
        gateway: Gateway,
        model: str,
        documents: Mapping[str, Document],
        parallelism: int = 1,
    ):
        self.gateway = gateway
        self.model = model
        self.documents = documents
        self.parallelism = max(1, parallelism)
        self._memo: dict[tuple[str, str], int | ScoringError] = {}
        self._lock = threading.Lock()

    def score(self, query_text: str, document: Document | str) -> int:
        doc = self.documents[document] if isinstance(document, str) else document
        key = (query_text, doc.id)
        with self._lock:
            hit = self._memo.get(key)
        if hit is None:
            hit = self._score_uncached(query_text, doc)
            with self._lock:
                self._memo.setdefault(key, hit)
        if isinstance(hit, ScoringError):
            raise hit
        return hit

    def _score_uncached(self, query_text: str, doc: Document) -> int | ScoringError:
        try:
            resp = self.gateway.complete(relevance_request(query_text, doc.render(), self.model))
            return parse_score(resp.content)
        except ScoringError as exc:
            return exc
        except PermanentError as exc:
            return ScoringError(f"backend rejected request ({exc.status})", exc.body)

    def _judge(self, query_text: str, doc_id: str, retrieval_score: float) -> Judgment:
        try:
            return Judgment(doc_id, retrieval_score, self.score(query_text, doc_id))
        except ScoringError as exc:
            return Judgment(doc_id, retrieval_score, None, str(exc))

    def judge_all(self, query_text: str, retrieved: Sequence[tuple[str, float]]) -> list[Judgment]:
        """Judgments in input order; per-document scoring failures carry ``error``."""
        if self.parallelism == 1 or len(retrieved) < 2:
            return [self._judge(query_text, d, s) for d, s in retrieved]
        with ThreadPoolExecutor(self.parallelism) as pool:
            futures = [
                pool.submit(contextvars.copy_context().run, self._judge, query_text, d, s)
                for d, s in retrieved
            ]
            return [f.result() for f in futures]

    def filter(self, query_text: str, retrieved: Sequence[tuple[str, float]], tau: int) -> FilteredList:
        """Keep documents graded strictly above ``tau``, in retrieval order."""
        out = FilteredList()
        for j in self.judge_all(query_text, retrieved):
            (out.kept if j.grade is not None and j.grade > tau else out.dropped).append(j)
        return out

    def rank_by_relevance(self, query_text: str, docs: Sequence[tuple[str, float]]) -> ScoredList:
        """Sort ``(doc_id, first retrieval score)`` pairs by grade, then retrieval score, then id.

        Documents that fail to score sort below grade 1.
        """
        judged = self.judge_all(query_text, docs)
        judged.sort(key=relevance_key)
        return [(j.doc_id, float(j.grade if j.grade is not None else 0)) for j in judged]


def relevance_key(j: Judgment) -> tuple:
    return (-(j.grade if j.grade is not None else 0), -j.retrieval_score, j.doc_id)
