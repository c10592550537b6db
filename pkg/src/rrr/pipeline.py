"""Rewrite-retrieve-rerank orchestration: the per-query loop and the batch runner."""

from __future__ import annotations

import configparser
import contextvars
import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import DocumentStore, Query, ScoredList, write_run
from .index import InvertedIndex
from .llm.gateway import Gateway
from .llm.ledger import CostReport, replay
from .llm.types import PermanentError, TransportError
from .relevance import FilteredList, Judgment, RelevanceModel, relevance_key
from .reranker import SlidingWindowReranker, positional_scores
from .rewriter import Rewriter, RewriteError, RewriteHistory

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    n: int = 100
    n_rw: int = 5
    n_aug: int = 3
    tau: int = 1
    w: int = 10
    s: int = 5
    feedback_enabled: bool = True
    feedback_source: str = "retriever"
    relevance_target: str = "original"
    cheap_model: str = "gpt-3.5-turbo"
    strong_model: str = "gpt-4"
    final_rerank: bool = True
    strong_depth: int = 30
    doc_chars: int = 1000
    relevance_parallelism: int = 1
    workers: int = 1

    def __post_init__(self):
        checks = [
            (self.n >= 1, "n must be >= 1"),
            (self.n_rw >= 1, "n_rw must be >= 1"),
            (self.n_aug >= 0, "n_aug must be >= 0"),
            (1 <= self.tau <= 5, "tau must be in 1..5"),
            (1 <= self.s <= self.w, "need 1 <= s <= w"),
            (self.feedback_source in ("retriever", "relevance"), "feedback_source must be retriever|relevance"),
            (self.relevance_target in ("original", "rewrite"), "relevance_target must be original|rewrite"),
            (self.strong_depth >= 1, "strong_depth must be >= 1"),
            (self.doc_chars >= 1, "doc_chars must be >= 1"),
            (self.relevance_parallelism >= 1 and self.workers >= 1, "parallelism must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "PipelineConfig":
        """Build from string or typed values, e.g. an INI section."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            name = key.strip().lower()
            if name not in types:
                raise ConfigError(f"unknown pipeline setting {key!r}")
            kwargs[name] = _coerce(name, types[name], raw)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path, section: str = "pipeline") -> "PipelineConfig":
        parser = configparser.ConfigParser()
        if not parser.read(path, encoding="utf-8"):
            raise ConfigError(f"cannot read config file {path}")
        return cls.from_mapping(dict(parser[section]) if parser.has_section(section) else {})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(name: str, typ: str, raw: object):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if typ == "int":
            return int(text)
        if typ == "bool":
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return text


@dataclass
class Components:
    store: DocumentStore
    index: InvertedIndex
    gateway: Gateway
    relevance: RelevanceModel
    rewriter: Rewriter
    reranker: SlidingWindowReranker

    @classmethod
    def build(cls, store: DocumentStore, index: InvertedIndex, gateway: Gateway,
              config: PipelineConfig) -> "Components":
        return cls(
            store=store,
            index=index,
            gateway=gateway,
            relevance=RelevanceModel(gateway, config.cheap_model, store, config.relevance_parallelism),
            rewriter=Rewriter(gateway, config.strong_model, config.doc_chars),
            reranker=SlidingWindowReranker(gateway, store, config.w, config.s),
        )


@dataclass
class RankedOutput:
    query_id: str
    ranked: ScoredList


@dataclass
class RunTrace:
    query_id: str
    query: str
    iterations: list[dict] = field(default_factory=list)
    pre_rerank: list[str] = field(default_factory=list)
    post_rerank: list[str] | None = None
    rerank_permutations: list[dict] = field(default_factory=list)
    stop_reason: str = ""
    warnings: list[str] = field(default_factory=list)
    calls: list[dict] = field(default_factory=list)
    ledger: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)


def merge(accumulated: Sequence[Judgment], new: FilteredList | Iterable[Judgment]) -> tuple[list[Judgment], list[str]]:
    """Add newly kept documents, skipping ones already present, keeping relevance order.

    Returns the merged list and the ids that were already in ``accumulated``.
    """
    kept = new.kept if isinstance(new, FilteredList) else list(new)
    present = {j.doc_id for j in accumulated}
    fresh, dupes = [], []
    for j in kept:
        if j.doc_id in present:
            dupes.append(j.doc_id)
        else:
            present.add(j.doc_id)
            fresh.append(j)
    return sorted([*accumulated, *fresh], key=relevance_key), dupes


def _feedback_ids(retrieved: ScoredList, judged: FilteredList, config: PipelineConfig) -> list[str]:
    if not config.feedback_enabled or config.n_aug == 0:
        return []
    if config.feedback_source == "retriever":
        return [d for d, _ in retrieved[: config.n_aug]]
    everything = sorted([*judged.kept, *judged.dropped], key=relevance_key)
    return [j.doc_id for j in everything[: config.n_aug]]


def run_query(query: Query, config: PipelineConfig, components: Components) -> tuple[RankedOutput, RunTrace]:
    c = components
    trace = RunTrace(query_id=query.id, query=query.text)
    with c.gateway.recording() as calls:
        accumulated: list[Judgment] = []
        history = RewriteHistory(topic=query.text, max_rounds=config.n_rw)
        seen: dict[str, tuple[ScoredList, FilteredList]] = {}
        q_t = query.text
        for t in range(1, config.n_rw + 1):
            step: dict = {"t": t, "query": q_t}
            if q_t in seen:
                # a repeated rewrite would retrieve and judge the same list again
                retrieved, judged = seen[q_t]
                step["skipped_duplicate"] = True
            else:
                retrieved = c.index.search(q_t, config.n)
                target = query.text if config.relevance_target == "original" else q_t
                judged = c.relevance.filter(target, retrieved, config.tau)
                seen[q_t] = (retrieved, judged)
                accumulated, dupes = merge(accumulated, judged)
                step.update(
                    skipped_duplicate=False,
                    retrieved=[[d, s] for d, s in retrieved],
                    grades=judged.grades(),
                    kept=[j.doc_id for j in judged.kept],
                    dropped=[j.doc_id for j in judged.dropped],
                    errors={j.doc_id: j.error for j in judged.dropped if j.error},
                    already_present=dupes,
                )
            step["accumulated"] = len(accumulated)
            trace.iterations.append(step)

            if len(accumulated) >= config.n:
                trace.stop_reason = "filled"
                break
            if t == config.n_rw:
                trace.stop_reason = "max_rewrites"
                break

            feedback = _feedback_ids(retrieved, judged, config)
            history = history.append_round(q_t, [c.store[d].render() for d in feedback])
            request = c.rewriter.request(history)
            step["feedback"] = feedback
            step["rewrite_prompt"] = request.key()
            try:
                q_t = c.rewriter.generate_rewrite(history)
            except (RewriteError, PermanentError) as exc:
                trace.stop_reason = "rewrite_failed"
                trace.warnings.append(f"iteration {t}: rewrite failed: {exc}")
                break
            step["next_query"] = q_t

        ordered = c.relevance.rank_by_relevance(
            query.text, [(j.doc_id, j.retrieval_score) for j in accumulated]
        )[: config.n]
        trace.pre_rerank = [d for d, _ in ordered]
        final_ids = trace.pre_rerank
        if config.final_rerank and final_ids:
            reranked = c.reranker.two_phase_rerank(
                query.text, final_ids, config.cheap_model, config.strong_model, config.strong_depth
            )
            final_ids = reranked.ranked
            trace.post_rerank = final_ids
            trace.rerank_permutations = reranked.permutations
            trace.warnings.extend(reranked.warnings)

    trace.calls = [call.to_dict() for call in calls]
    trace.ledger = replay(calls, c.gateway.ledger.rates).report().to_dict()
    return RankedOutput(query.id, positional_scores(final_ids)), trace


@dataclass
class BatchResult:
    results: dict[str, ScoredList]
    traces: list[RunTrace]
    errors: list[dict]
    ledger: CostReport

    @property
    def backend_exhausted(self) -> bool:
        return any(e["kind"] == "backend" for e in self.errors)


RUN_FILE = "run.trec"
TRACE_FILE = "traces.jsonl"
LEDGER_FILE = "ledger.json"
ERROR_FILE = "errors.json"


def run_batch(
    queries: Sequence[Query],
    config: PipelineConfig,
    components: Components,
    out_dir: str | Path | None = None,
    tag: str = "rrr",
    progress=None,
) -> BatchResult:
    """Run every query independently; failures are recorded and skipped."""

    def one(query: Query):
        try:
            return run_query(query, config, components), None
        except Exception as exc:  # noqa: BLE001 - one bad query must not sink the batch
            kind = "backend" if isinstance(exc, TransportError) else "error"
            log.error("query %s failed: %s", query.id, exc)
            return None, {"query_id": query.id, "kind": kind, "error": f"{type(exc).__name__}: {exc}"}

    if config.workers == 1:
        outcomes = []
        for q in queries:
            outcomes.append(one(q))
            if progress:
                progress(q, outcomes[-1])
    else:
        with ThreadPoolExecutor(config.workers) as pool:
            futures = [pool.submit(contextvars.copy_context().run, one, q) for q in queries]
            outcomes = [f.result() for f in futures]
        if progress:
            for q, outcome in zip(queries, outcomes):
                progress(q, outcome)

    results, traces, errors = {}, [], []
    for outcome, error in outcomes:
        if error:
            errors.append(error)
            continue
        output, trace = outcome
        results[output.query_id] = output.ranked
        traces.append(trace)

    batch = BatchResult(results, traces, errors, components.gateway.ledger_report())
    if out_dir is not None:
        write_batch(batch, out_dir, tag)
    return batch


def write_batch(batch: BatchResult, out_dir: str | Path, tag: str = "rrr") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_run(batch.results, tag, out / RUN_FILE)
    with open(out / TRACE_FILE, "w", encoding="utf-8") as fh:
        for trace in batch.traces:
            fh.write(trace.to_json() + "\n")
    (out / LEDGER_FILE).write_text(json.dumps(batch.ledger.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / ERROR_FILE).write_text(json.dumps(batch.errors, indent=2, sort_keys=True) + "\n")
