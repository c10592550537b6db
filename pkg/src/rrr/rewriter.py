"""Query rewriting with retrieval feedback: the growing rewrite prompt and its parsing."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .llm.gateway import Gateway
from .llm.types import ChatRequest, Message
from .prompts import template

REWRITE_TOKEN_LIMIT = 20

_TAG = re.compile(r"<Rewrite>(.*?)</Rewrite>", re.DOTALL | re.IGNORECASE)
_ANY_TAG = re.compile(r"</?\s*Rewrite\s*>?", re.IGNORECASE)


class RewriteError(ValueError):
    pass


@dataclass(frozen=True)
class Round:
    query: str
    feedback: tuple[str, ...]


@dataclass(frozen=True)
class RewriteHistory:
    topic: str
    max_rounds: int
    rounds: tuple[Round, ...] = ()

    def append_round(self, query: str, feedback) -> "RewriteHistory":
        if len(self.rounds) >= self.max_rounds:
            raise RewriteError(f"history already holds {self.max_rounds} rounds")
        return RewriteHistory(self.topic, self.max_rounds, (*self.rounds, Round(query, tuple(feedback))))

    def queries(self) -> list[str]:
        return [r.query for r in self.rounds]


def append_round(history: RewriteHistory, query: str, feedback) -> RewriteHistory:
    return history.append_round(query, feedback)


def render_user_prompt(history: RewriteHistory, doc_chars: int | None = None) -> str:
    blocks = [template("rewrite").format(topic=history.topic)]
    for i, rnd in enumerate(history.rounds, 1):
        blocks.append(f"QUERY #{i}: {rnd.query}")
        blocks.append("TOP RESULTS:")
        for j, doc in enumerate(rnd.feedback, 1):
            blocks.append(f"{j}. {doc[:doc_chars] if doc_chars else doc}")
    return "\n\n".join(blocks)


def render_prompt(history: RewriteHistory, model: str = "gpt-4", doc_chars: int | None = 1000) -> ChatRequest:
    if not history.rounds:
        raise RewriteError("cannot render a rewrite prompt without any rounds")
    return ChatRequest(
        model=model,
        messages=(
            Message("system", template("system")),
            Message("user", render_user_prompt(history, doc_chars)),
        ),
        max_output_tokens=REWRITE_TOKEN_LIMIT,
    )


def parse_rewrite(content: str) -> str:
    m = _TAG.search(content)
    if m:
        text = m.group(1).strip()
        if not text:
            raise RewriteError("empty <Rewrite> tag")
        return text
    # repair: untagged or cut off by the token limit
    text = _ANY_TAG.sub(" ", content).strip()
    if not text:
        raise RewriteError("empty rewrite")
    if len(text.split()) > REWRITE_TOKEN_LIMIT:
        raise RewriteError(f"untagged rewrite longer than {REWRITE_TOKEN_LIMIT} tokens: {content[:200]!r}")
    return " ".join(text.split())


class Rewriter:
    def __init__(self, gateway: Gateway, model: str, doc_chars: int | None = 1000):
        self.gateway = gateway
        self.model = model
        self.doc_chars = doc_chars

    def request(self, history: RewriteHistory) -> ChatRequest:
        return render_prompt(history, self.model, self.doc_chars)

    def generate_rewrite(self, history: RewriteHistory) -> str:
        resp = self.gateway.complete(self.request(history))
        return parse_rewrite(resp.content)
