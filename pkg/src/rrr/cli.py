"""Command line: ``rrr index | run | eval | cost | replay``.

Exit codes: 0 success, 1 usage or IO error, 2 LLM backend exhausted its retries.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

from . import corpus as corpus_io
from . import index as index_mod
from .evaluation import evaluate_run, parse_metrics, write_report
from .llm import CallCache, CostLedger, Gateway, MockBackend, load_mock_rules, replay
from .llm.ledger import CostReport, CostRow
from .pipeline import ConfigError, Components, PipelineConfig, run_batch

log = logging.getLogger("rrr")

EXIT_OK, EXIT_USAGE, EXIT_BACKEND = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _index_params(ns) -> index_mod.IndexParams:
    return index_mod.IndexParams(k1=ns.k1, b=ns.b, stemming=not ns.no_stemming, stopwords=not ns.no_stopwords)


def cmd_index(ns) -> int:
    corpus_path, index_path = Path(ns.corpus), Path(ns.index)
    if not corpus_path.is_file():
        raise UsageError(f"corpus file not found: {corpus_path}")
    if index_path.exists() and not ns.force:
        raise UsageError(f"{index_path} already exists; pass --force to overwrite")
    store = corpus_io.load_corpus(corpus_path)
    idx = index_mod.build_index(store, _index_params(ns))
    index_path.parent.mkdir(parents=True, exist_ok=True)
    index_mod.save(idx, index_path)
    print(f"indexed {idx.doc_count} documents, {len(idx.postings)} terms -> {index_path}")
    return EXIT_OK


def _resolve(base: Path, value: str | None) -> Path | None:
    if not value:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_run_config(path: str | Path):
    """Parse the INI run config. Returns (sections, pipeline config)."""
    path = Path(path)
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding="utf-8"):
        raise UsageError(f"cannot read config file {path}")
    base = path.parent
    data = parser["data"] if parser.has_section("data") else {}
    backend = parser["backend"] if parser.has_section("backend") else {}
    output = parser["output"] if parser.has_section("output") else {}
    idx = parser["index"] if parser.has_section("index") else {}

    settings = {
        "corpus": _resolve(base, data.get("corpus")),
        "queries": _resolve(base, data.get("queries")),
        "qrels": _resolve(base, data.get("qrels")),
        "index": _resolve(base, data.get("index")),
        "backend": backend.get("kind", "mock"),
        "rules": _resolve(base, backend.get("rules")),
        "cache": _resolve(base, backend.get("cache")),
        "base_url": backend.get("base_url"),
        "api_key_env": backend.get("api_key_env"),
        "retries": int(backend.get("retries", 5)),
        "backoff": float(backend.get("backoff", 1.0)),
        "out": _resolve(base, output.get("dir", "out")),
        "tag": output.get("tag", "rrr"),
        "index_params": index_mod.IndexParams(
            k1=float(idx.get("k1", 0.9)),
            b=float(idx.get("b", 0.4)),
            stemming=str(idx.get("stemming", "true")).lower() in ("1", "true", "yes", "on"),
            stopwords=str(idx.get("stopwords", "true")).lower() in ("1", "true", "yes", "on"),
        ),
    }
    missing = [k for k in ("corpus", "queries") if settings[k] is None]
    if missing:
        raise UsageError(f"config {path} is missing [data] {', '.join(missing)}")
    if settings["backend"] not in ("mock", "http"):
        raise UsageError(f"[backend] kind must be mock or http, got {settings['backend']!r}")
    if settings["backend"] == "mock" and settings["rules"] is None:
        raise UsageError("[backend] kind = mock needs a rules file")
    pipeline = dict(parser["pipeline"]) if parser.has_section("pipeline") else {}
    return settings, PipelineConfig.from_mapping(pipeline)


def _apply_flags(config: PipelineConfig, ns) -> PipelineConfig:
    overrides = {}
    if ns.no_feedback:
        overrides["feedback_enabled"] = False
    if ns.feedback_source:
        overrides["feedback_source"] = ns.feedback_source
    if ns.relevance_target:
        overrides["relevance_target"] = ns.relevance_target
    if ns.max_rewrites is not None:
        overrides["n_rw"] = ns.max_rewrites
    if ns.no_rerank:
        overrides["final_rerank"] = False
    if ns.workers is not None:
        overrides["workers"] = ns.workers
    return PipelineConfig(**{**config.to_dict(), **overrides}) if overrides else config


def _build_gateway(settings, store, queries) -> Gateway:
    cache = CallCache(settings["cache"])
    if settings["backend"] == "mock":
        qrels = corpus_io.load_qrels(settings["qrels"]) if settings["qrels"] else None
        rules = load_mock_rules(settings["rules"], queries, qrels)
        return Gateway(MockBackend(rules, store), cache=cache, ledger=CostLedger(),
                       retries=settings["retries"], backoff_base=settings["backoff"], jitter=False)
    import os

    from .llm.http import OpenAIChatBackend

    key = os.environ.get(settings["api_key_env"]) if settings["api_key_env"] else None
    backend = OpenAIChatBackend(base_url=settings["base_url"], api_key=key)
    return Gateway(backend, cache=cache, ledger=CostLedger(),
                   retries=settings["retries"], backoff_base=settings["backoff"])


def cmd_run(ns) -> int:
    settings, config = load_run_config(ns.config)
    config = _apply_flags(config, ns)
    out = Path(ns.out) if ns.out else settings["out"]

    for key in ("corpus", "queries", "qrels", "rules"):
        p = settings[key]
        if p is not None and not p.is_file():
            raise UsageError(f"{key} file not found: {p}")
    store = corpus_io.load_corpus(settings["corpus"])
    queries = corpus_io.load_queries(settings["queries"])
    if settings["index"] is not None and settings["index"].exists():
        idx = index_mod.load(settings["index"])
    else:
        idx = index_mod.build_index(store, settings["index_params"])

    gateway = _build_gateway(settings, store, queries)
    components = Components.build(store, idx, gateway, config)

    total = len(queries)
    done = [0]

    def progress(query, outcome):
        done[0] += 1
        result, error = outcome
        if error:
            print(f"[{done[0]}/{total}] {query.id}: FAILED {error['error']}", file=sys.stderr)
        else:
            output, trace = result
            print(f"[{done[0]}/{total}] {query.id}: {len(output.ranked)} docs, "
                  f"{len(trace.iterations)} iterations, {len(trace.calls)} llm calls", file=sys.stderr)

    batch = run_batch(queries, config, components, out_dir=out, tag=settings["tag"], progress=progress)
    if not ns.no_figures:
        from .plotting import plot_accumulation, plot_cost_report

        plot_cost_report(batch.ledger, out / "cost.png")
        if batch.traces:
            plot_accumulation(batch.traces, out / "accumulation.png")
    print(batch.ledger.format())
    print(f"{len(batch.results)} queries ranked, {len(batch.errors)} failed -> {out}")
    return EXIT_BACKEND if batch.backend_exhausted else EXIT_OK


def cmd_eval(ns) -> int:
    for p in (ns.run, ns.qrels):
        if not Path(p).is_file():
            raise UsageError(f"file not found: {p}")
    specs = parse_metrics(ns.metrics, capped=ns.capped)
    report = evaluate_run(ns.run, corpus_io.load_qrels(ns.qrels), specs)
    print(report.format_table())
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if ns.out:
        for path in write_report(report, ns.out, figure=not ns.no_figures):
            print(f"wrote {path}")
    return EXIT_OK


def _report_from_json(data: dict) -> CostReport:
    rows = [
        CostRow(model, v["calls"], v["cached_hits"], v["input_tokens"], v["output_tokens"],
                v["cost_usd"], v.get("priced", True))
        for model, v in sorted(data["models"].items())
    ]
    return CostReport(tuple(rows))


def _read_traces(path: Path) -> list[dict]:
    traces = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    traces.append(json.loads(line))
                except json.JSONDecodeError:
                    raise UsageError(f"{path}:{lineno}: malformed trace line") from None
    return traces


def cmd_cost(ns) -> int:
    path = Path(ns.path)
    if not path.is_file():
        raise UsageError(f"file not found: {path}")
    if path.suffix == ".jsonl":
        calls = [c for t in _read_traces(path) for c in t["calls"]]
        report = replay(calls).report()
    else:
        report = _report_from_json(json.loads(path.read_text()))
    print(report.format())
    if ns.figure:
        from .plotting import plot_cost_report

        print(f"wrote {plot_cost_report(report, ns.figure)}")
    return EXIT_OK


def cmd_replay(ns) -> int:
    path = Path(ns.traces)
    if not path.is_file():
        raise UsageError(f"file not found: {path}")
    traces = _read_traces(path)
    all_calls = []
    for t in traces:
        calls = t["calls"]
        all_calls.extend(calls)
        queries = " | ".join(it["query"] for it in t["iterations"])
        final = t["post_rerank"] if t["post_rerank"] is not None else t["pre_rerank"]
        print(f"{t['query_id']}: {len(t['iterations'])} iterations ({t['stop_reason']}), "
              f"{len(final)} docs, {len(calls)} calls, ${t['ledger']['total_usd']:.4f}")
        if ns.verbose:
            print(f"    queries: {queries}")
            for w in t["warnings"]:
                print(f"    warning: {w}")
    report = replay(all_calls).report()
    print(report.format())
    if ns.ledger:
        recorded = json.loads(Path(ns.ledger).read_text())
        if recorded != report.to_dict():
            print("ledger mismatch: traces do not add up to the recorded ledger", file=sys.stderr)
            return EXIT_USAGE
        print("ledger matches traces")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rrr", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("index", help="build a BM25 index file from corpus.jsonl")
    s.add_argument("corpus")
    s.add_argument("index")
    s.add_argument("--force", action="store_true", help="overwrite an existing index file")
    s.add_argument("--k1", type=float, default=0.9)
    s.add_argument("--b", type=float, default=0.4)
    s.add_argument("--no-stemming", action="store_true")
    s.add_argument("--no-stopwords", action="store_true")
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("run", help="run the pipeline over a query set")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (overrides [output] dir)")
    s.add_argument("--no-feedback", action="store_true", help="rewrite without retrieved documents")
    s.add_argument("--feedback-source", choices=["retriever", "relevance"])
    s.add_argument("--relevance-target", choices=["original", "rewrite"])
    s.add_argument("--max-rewrites", type=int, help="N_rw")
    s.add_argument("--no-rerank", action="store_true", help="emit the relevance-ordered list")
    s.add_argument("--workers", type=int)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("eval", help="score a TREC run against qrels")
    s.add_argument("--run", required=True)
    s.add_argument("--qrels", required=True)
    s.add_argument("--metrics", default="ndcg@1,ndcg@5,ndcg@10,recall@10,recall@100")
    s.add_argument("--capped", action="store_true", help="add capped recall columns")
    s.add_argument("--out", help="write report.json, metrics.tsv and metrics.png here")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("cost", help="print a cost report from ledger.json or traces.jsonl")
    s.add_argument("path")
    s.add_argument("--figure", help="also render the report to this image file")
    s.set_defaults(func=cmd_cost)

    s = sub.add_parser("replay", help="summarize traces and rebuild the ledger from them")
    s.add_argument("traces")
    s.add_argument("--ledger", help="ledger.json to check the replayed totals against")
    s.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return ns.func(ns)
    except (UsageError, ConfigError, corpus_io.DatasetError, index_mod.IndexFormatError,
            index_mod.IndexBuildError, OSError, ValueError) as exc:
        print(f"rrr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
