"""Deterministic offline backend that understands the three pipeline prompts.

Rules:

* relevance -- ``overlap``: 1 when the document shares no query token, else
  ``1 + ceil(4 * shared / query_tokens)``. ``oracle``: ``min(5, 1 + 2 * grade)``
  from hidden judgments.
* rewrite -- ``script``: the i-th scripted rewrite for the topic after i
  rounds. ``feedback_terms``: the most frequent new words in the latest
  round's feedback documents (shared by at least two of them, when there
  are two or more) that no earlier query used; the topic itself when nothing
  qualifies.
* permutation -- ``oracle`` (hidden grade), ``overlap`` (shared query tokens)
  or ``identity``; ties keep window order.

Anything the rules cannot answer raises :class:`UnhandledPrompt`.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from ..corpus import Document, Qrels, Query
from ..index.analysis import IndexParams, tokenize
from ..prompts import template
from .types import ChatRequest, ChatResponse, LLMError

_RELEVANCE = re.compile(r"\n\nQUERY: (.*?)\n\nDOCUMENT: (.*)\Z", re.DOTALL)
_TOPIC = re.compile(r"\nTOPIC: (.*?)(?:\n\nQUERY #1: |\Z)", re.DOTALL)
_QUERY_LINE = re.compile(r"^QUERY #(\d+): (.*)$")
_ITEM = re.compile(r"^(\d+)\. (.*)\Z", re.DOTALL)
_INTRO = re.compile(r"relevance to query: (.*)\Z", re.DOTALL)
_PASSAGE = re.compile(r"^\[(\d+)\] (.*)\Z", re.DOTALL)

_PLAIN = IndexParams(stemming=False, stopwords=True)


class UnhandledPrompt(LLMError):
    """The mock has no rule for this request. Never answered with a default."""


@dataclass
class MockRules:
    relevance: str = "overlap"
    rewrite: str = "script"
    permutation: str = "oracle"
    # topic text -> rewrites for rounds 1, 2, ...
    scripts: dict[str, list[str]] = field(default_factory=dict)
    # query text -> doc id -> hidden grade
    grades: dict[str, dict[str, int]] = field(default_factory=dict)
    feedback_terms: int = 3

    def __post_init__(self):
        if self.relevance not in ("overlap", "oracle"):
            raise ValueError(f"unknown relevance rule {self.relevance!r}")
        if self.rewrite not in ("script", "feedback_terms"):
            raise ValueError(f"unknown rewrite rule {self.rewrite!r}")
        if self.permutation not in ("oracle", "overlap", "identity"):
            raise ValueError(f"unknown permutation rule {self.permutation!r}")


def load_mock_rules(path: str | Path, queries: Iterable[Query] = (), qrels: Qrels | None = None) -> MockRules:
    """Read a rules JSON file. Scripts are keyed by query id; grades come from ``qrels``."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    by_id = {q.id: q.text for q in queries}
    scripts = {}
    for qid, steps in raw.get("scripts", {}).items():
        if qid not in by_id:
            raise ValueError(f"{path}: script for unknown query id {qid!r}")
        scripts[by_id[qid]] = list(steps)
    grades: dict[str, dict[str, int]] = {}
    if qrels is not None:
        for qid, judged in qrels.by_query().items():
            if qid in by_id:
                grades[by_id[qid]] = judged
    return MockRules(
        relevance=raw.get("relevance", "overlap"),
        rewrite=raw.get("rewrite", "script"),
        permutation=raw.get("permutation", "oracle"),
        scripts=scripts,
        grades=grades,
        feedback_terms=int(raw.get("feedback_terms", 3)),
    )


def _count_tokens(text: str) -> int:
    return len(text.split())


class MockBackend:
    def __init__(self, rules: MockRules, documents: Iterable[Document] = ()):
        self.rules = rules
        self._by_text: dict[str, str] = {}
        for doc in documents:
            self._by_text.setdefault(doc.render(), doc.id)
        self.calls = 0

    def __call__(self, request: ChatRequest) -> ChatResponse:
        self.calls += 1
        system = request.messages[0].content
        user = request.messages[1].content if len(request.messages) > 1 else ""
        if system == template("rerank_system"):
            content = self._permute(request)
        elif "score the DOCUMENT on a scale" in user:
            content = self._relevance(user)
        elif "Enclose the answer in <Rewrite></Rewrite>" in user:
            content = self._rewrite(user)
        else:
            raise UnhandledPrompt(f"no mock rule for prompt starting {user[:80]!r}")
        prompt_tokens = sum(_count_tokens(m.content) for m in request.messages)
        return ChatResponse(content, prompt_tokens, _count_tokens(content))

    def _doc_id(self, text: str) -> str:
        try:
            return self._by_text[text]
        except KeyError:
            raise UnhandledPrompt(f"document not in mock corpus: {text[:80]!r}") from None

    def _grade(self, query: str, doc_text: str) -> int:
        if query not in self.rules.grades:
            raise UnhandledPrompt(f"no hidden grades for query {query!r}")
        return self.rules.grades[query].get(self._doc_id(doc_text), 0)

    @staticmethod
    def _overlap(query: str, doc_text: str) -> tuple[int, int]:
        q = set(tokenize(query))
        return len(q & set(tokenize(doc_text))), len(q)

    def _relevance(self, user: str) -> str:
        m = _RELEVANCE.search(user)
        if not m:
            raise UnhandledPrompt("relevance prompt without QUERY/DOCUMENT sections")
        query, doc = m.groups()
        if self.rules.relevance == "oracle":
            score = min(5, 1 + 2 * self._grade(query, doc))
        else:
            shared, total = self._overlap(query, doc)
            score = 1 if shared == 0 else min(5, 1 + math.ceil(4 * shared / total))
        return f"<Score>{score}</Score>"

    def _rewrite(self, user: str) -> str:
        m = _TOPIC.search(user)
        if not m:
            raise UnhandledPrompt("rewrite prompt without TOPIC")
        topic = m.group(1)
        blocks = user[m.end(1):].split("\n\n")
        queries: list[str] = []
        feedback: list[str] = []
        for block in blocks:
            qm = _QUERY_LINE.match(block)
            if qm:
                queries.append(qm.group(2))
                feedback = []
                continue
            im = _ITEM.match(block)
            if im:
                feedback.append(im.group(2))
        step = len(queries)
        if step == 0:
            raise UnhandledPrompt("rewrite prompt without any QUERY block")

        if self.rules.rewrite == "script":
            script = self.rules.scripts.get(topic)
            if script is None or step > len(script):
                raise UnhandledPrompt(f"no scripted rewrite #{step} for topic {topic!r}")
            text = script[step - 1]
        else:
            text = self._feedback_terms(topic, queries, feedback)
        return f"<Rewrite>{text}</Rewrite>"

    def _feedback_terms(self, topic: str, queries: list[str], feedback: list[str]) -> str:
        if not feedback:
            return topic
        used = set(tokenize(topic, _PLAIN))
        for q in queries:
            used.update(tokenize(q, _PLAIN))
        counts: Counter[str] = Counter()
        doc_freq: Counter[str] = Counter()
        for doc in feedback:
            tokens = [t for t in tokenize(doc, _PLAIN) if t not in used]
            counts.update(tokens)
            doc_freq.update(set(tokens))
        min_df = 2 if len(feedback) > 1 else 1
        ranked = sorted((t for t in counts if doc_freq[t] >= min_df),
                        key=lambda t: (-doc_freq[t], -counts[t], t))
        return " ".join(ranked[: self.rules.feedback_terms]) or topic

    def _permute(self, request: ChatRequest) -> str:
        intro = _INTRO.search(request.messages[1].content)
        if not intro:
            raise UnhandledPrompt("re-rank prompt without query")
        query = intro.group(1)
        passages: list[str] = []
        for msg in request.messages[2:]:
            pm = _PASSAGE.match(msg.content) if msg.role == "user" else None
            if pm:
                passages.append(pm.group(2))
        if not passages:
            raise UnhandledPrompt("re-rank prompt without passages")
        if self.rules.permutation == "identity":
            keys = [0] * len(passages)
        elif self.rules.permutation == "oracle":
            keys = [self._grade(query, p) for p in passages]
        else:
            keys = [self._overlap(query, p)[0] for p in passages]
        order = sorted(range(len(passages)), key=lambda i: -keys[i])
        return " > ".join(f"[{i + 1}]" for i in order)


def grades_by_text(queries: Iterable[Query], judgments: Mapping[str, Mapping[str, int]]) -> dict[str, dict[str, int]]:
    """Re-key per-query-id judgments by query text, the key the mock sees."""
    return {q.text: dict(judgments.get(q.id, {})) for q in queries}
