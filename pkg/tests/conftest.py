import json
from pathlib import Path

import pytest

from rrr.corpus import Document, DocumentStore, Query
from rrr.index import build_index
from rrr.llm import CallCache, ChatResponse, CostLedger, Gateway, MockBackend, MockRules
from rrr.pipeline import Components, PipelineConfig

ROOT = Path(__file__).resolve().parent.parent
TOY = ROOT / "data" / "toy"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture
def toy_dir():
    return TOY


class Scripted:
    """Backend returning canned contents in order, counting calls."""

    def __init__(self, *contents, tokens=(0, 0)):
        self.contents = list(contents)
        self.tokens = tokens
        self.calls = 0
        self.requests = []

    def __call__(self, request):
        self.calls += 1
        self.requests.append(request)
        item = self.contents.pop(0) if len(self.contents) > 1 else self.contents[0]
        if isinstance(item, Exception):
            raise item
        return ChatResponse(item, *self.tokens)


def make_gateway(backend, **kwargs):
    kwargs.setdefault("jitter", False)
    kwargs.setdefault("sleep", lambda s: None)
    return Gateway(backend, cache=CallCache(), ledger=CostLedger(), **kwargs)


def mock_components(docs, rules, config=PipelineConfig()):
    store = DocumentStore(docs)
    backend = MockBackend(rules, store)
    gateway = make_gateway(backend)
    return Components.build(store, build_index(store), gateway, config), backend


def lexical_gap_dataset(n_clusters=5, per_cluster=4, distractors=6):
    """One topic whose relevant documents are split into vocabulary clusters.

    Cluster 0 shares the topic words; cluster i > 0 uses only its key word
    ``kw{i}``. Every cluster also mentions the next cluster's key word once,
    which is what a feedback-driven rewriter can pick up.
    """
    topic = "alpha beta"
    key = ["alpha beta"] + [f"kw{i}" for i in range(1, n_clusters)]
    docs, grades = [], {}
    for c in range(n_clusters):
        bridge = key[c + 1] if c + 1 < n_clusters else ""
        own = key[c] if c == 0 else f"{key[c]} {key[c]}"
        for j in range(per_cluster):
            doc_id = f"c{c}d{j}"
            docs.append(Document(doc_id, f"{own} filler{c}x{j} {bridge}".strip()))
            grades[doc_id] = 2
    for j in range(distractors):
        # topic vocabulary, not relevant
        docs.append(Document(f"x{j}", f"alpha noise{j} other{j}"))
    query = Query("q1", topic)
    scripts = {topic: key[1:] + ["nothing matches this"]}
    return docs, query, {topic: grades}, scripts


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
