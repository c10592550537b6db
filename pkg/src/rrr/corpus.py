"""BEIR-style dataset loading and TREC run-file IO."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

log = logging.getLogger(__name__)

# (doc_id, score) pairs, best first.
ScoredList = list[tuple[str, float]]


class DatasetError(ValueError):
    """Raised for malformed dataset or run files."""


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    title: str | None = None

    def render(self) -> str:
        """Title and body joined the way every prompt and the index see them."""
        return f"{self.title} {self.text}" if self.title else self.text


@dataclass(frozen=True)
class Query:
    id: str
    text: str


class DocumentStore:
    """Immutable id -> Document map that remembers insertion order."""

    def __init__(self, documents: Iterable[Document] = ()):
        self._docs: dict[str, Document] = {}
        for doc in documents:
            if not doc.id:
                raise DatasetError("document id must be non-empty")
            if doc.id in self._docs:
                raise DatasetError(f"duplicate document id {doc.id!r}")
            self._docs[doc.id] = doc

    def __len__(self) -> int:
        return len(self._docs)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._docs.values())

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self._docs

    def __getitem__(self, doc_id: str) -> Document:
        return self._docs[doc_id]

    def get(self, doc_id: str) -> Document | None:
        return self._docs.get(doc_id)

    def ids(self) -> list[str]:
        return list(self._docs)


@dataclass
class Qrels:
    """Graded judgments. Unjudged pairs read as grade 0."""

    judgments: dict[tuple[str, str], int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def grade(self, query_id: str, doc_id: str) -> int:
        return self.judgments.get((query_id, doc_id), 0)

    def query_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for qid, _ in self.judgments:
            seen.setdefault(qid)
        return list(seen)

    def for_query(self, query_id: str) -> dict[str, int]:
        return {d: g for (q, d), g in self.judgments.items() if q == query_id}

    def by_query(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for (q, d), g in self.judgments.items():
            out.setdefault(q, {})[d] = g
        return out

    def __len__(self) -> int:
        return len(self.judgments)


def _read_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise DatasetError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, record


def _field(record: dict, name: str, path: Path, lineno: int) -> str:
    value = record.get(name)
    if not isinstance(value, str):
        raise DatasetError(f"{path}:{lineno}: missing or non-string field {name!r}")
    return value


def load_corpus(path: str | Path) -> DocumentStore:
    path = Path(path)
    docs: dict[str, Document] = {}
    for lineno, record in _read_jsonl(path):
        doc_id = _field(record, "_id", path, lineno)
        if not doc_id:
            raise DatasetError(f"{path}:{lineno}: empty _id")
        if doc_id in docs:
            raise DatasetError(f"{path}:{lineno}: duplicate document id {doc_id!r}")
        title = record.get("title")
        if title is not None and not isinstance(title, str):
            raise DatasetError(f"{path}:{lineno}: non-string title")
        docs[doc_id] = Document(id=doc_id, text=_field(record, "text", path, lineno), title=title or None)
    return DocumentStore(docs.values())


def write_corpus(store: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in store:
            record = {"_id": doc.id, "title": doc.title or "", "text": doc.text}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_queries(path: str | Path) -> list[Query]:
    path = Path(path)
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, record in _read_jsonl(path):
        qid = _field(record, "_id", path, lineno)
        text = _field(record, "text", path, lineno)
        if not text.strip():
            raise DatasetError(f"{path}:{lineno}: empty query text")
        if qid in seen:
            raise DatasetError(f"{path}:{lineno}: duplicate query id {qid!r}")
        seen.add(qid)
        queries.append(Query(id=qid, text=text))
    return queries


def write_queries(queries: Iterable[Query], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps({"_id": q.id, "text": q.text}, ensure_ascii=False) + "\n")


def load_qrels(path: str | Path) -> Qrels:
    """Read a BEIR qrels TSV (``query-id corpus-id score`` header)."""
    path = Path(path)
    qrels = Qrels()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and parts[0] == "query-id":
                continue
            if len(parts) != 3:
                raise DatasetError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
            qid, did, raw = parts
            try:
                grade = int(raw)
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer score {raw!r}") from None
            if grade < 0:
                raise DatasetError(f"{path}:{lineno}: negative score {grade}")
            if (qid, did) in qrels.judgments:
                msg = f"{path}:{lineno}: duplicate judgment ({qid}, {did}) overrides earlier grade"
                qrels.warnings.append(msg)
                log.warning(msg)
            qrels.judgments[(qid, did)] = grade
    return qrels


def write_qrels(judgments: Mapping[tuple[str, str], int], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("query-id\tcorpus-id\tscore\n")
        for (qid, did), grade in judgments.items():
            fh.write(f"{qid}\t{did}\t{grade}\n")


def write_run(results: Mapping[str, Sequence[tuple[str, float]]], tag: str, path: str | Path) -> None:
    """Write a 6-column TREC run. Each list must already be sorted by score."""
    if not tag or any(c.isspace() for c in tag):
        raise ValueError(f"run tag must be a non-empty token, got {tag!r}")
    lines = []
    for qid, ranked in results.items():
        for i in range(1, len(ranked)):
            if ranked[i][1] > ranked[i - 1][1]:
                raise ValueError(f"results for query {qid!r} are not sorted by descending score")
        for rank, (doc_id, score) in enumerate(ranked, 1):
            lines.append(f"{qid} Q0 {doc_id} {rank} {score:.6f} {tag}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)


@dataclass(frozen=True)
class RunEntry:
    query_id: str
    doc_id: str
    rank: int
    score: float
    tag: str


def read_run(path: str | Path) -> list[RunEntry]:
    path = Path(path)
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise DatasetError(f"{path}:{lineno}: expected 6 columns, got {len(parts)}")
            qid, _, did, rank, score, tag = parts
            try:
                entries.append(RunEntry(qid, did, int(rank), float(score), tag))
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: bad rank or score") from None
    return entries


def run_to_rankings(entries: Iterable[RunEntry]) -> dict[str, list[str]]:
    """Group a run by query, ordered by descending score (file order on ties)."""
    grouped: dict[str, list[RunEntry]] = {}
    for e in entries:
        grouped.setdefault(e.query_id, []).append(e)
    return {
        qid: [e.doc_id for e in sorted(rows, key=lambda e: -e.score)]
        for qid, rows in grouped.items()
    }
