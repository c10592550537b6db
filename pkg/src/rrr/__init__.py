"""Zero-shot retrieval by iterated query rewriting, relevance filtering and LLM re-ranking."""

from .corpus import Document, DocumentStore, Qrels, Query, load_corpus, load_qrels, load_queries, write_run
from .evaluation import MetricSpec, evaluate_run, ndcg_at_k, recall_at_k
from .pipeline import Components, PipelineConfig, RunTrace, merge, run_batch, run_query

__version__ = "0.1.0"

__all__ = [
    "Components",
    "Document",
    "DocumentStore",
    "MetricSpec",
    "PipelineConfig",
    "Qrels",
    "Query",
    "RunTrace",
    "evaluate_run",
    "load_corpus",
    "load_qrels",
    "load_queries",
    "merge",
    "ndcg_at_k",
    "recall_at_k",
    "run_batch",
    "run_query",
    "write_run",
]
