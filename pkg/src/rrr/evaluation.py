"""nDCG@k and Recall@k over TREC runs and BEIR qrels."""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Qrels, RunEntry, read_run, run_to_rankings

log = logging.getLogger(__name__)


def ndcg_at_k(ranked: Sequence[str], grades: Mapping[str, int], k: int) -> float:
    """Linear-gain nDCG with a log2(rank + 1) discount. 0 when nothing is relevant."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ideal = sorted((g for g in grades.values() if g > 0), reverse=True)[:k]
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
    if idcg == 0:
        return 0.0
    dcg = sum(grades.get(d, 0) / math.log2(i + 2) for i, d in enumerate(ranked[:k]))
    return dcg / idcg


def recall_at_k(ranked: Sequence[str], grades: Mapping[str, int], k: int, capped: bool = False) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    relevant = {d for d, g in grades.items() if g > 0}
    if not relevant:
        return 0.0
    hits = len(relevant.intersection(ranked[:k]))
    return hits / (min(len(relevant), k) if capped else len(relevant))


@dataclass(frozen=True)
class MetricSpec:
    kind: str  # "ndcg" | "recall"
    k: int
    capped: bool = False

    @property
    def name(self) -> str:
        if self.kind == "ndcg":
            return f"nDCG@{self.k}"
        return f"{'R_cap' if self.capped else 'Recall'}@{self.k}"

    def compute(self, ranked: Sequence[str], grades: Mapping[str, int]) -> float:
        if self.kind == "ndcg":
            return ndcg_at_k(ranked, grades, self.k)
        return recall_at_k(ranked, grades, self.k, self.capped)


_SPEC = re.compile(r"^(ndcg|recall|r_cap)@(\d+)$", re.IGNORECASE)


def parse_metrics(text: str, capped: bool = False) -> list[MetricSpec]:
    """``"ndcg@10,recall@100"``. With ``capped`` each recall also gets a capped twin."""
    specs = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        m = _SPEC.match(part)
        if not m:
            raise ValueError(f"bad metric {part!r}; expected ndcg@K or recall@K")
        kind, k = m.group(1).lower(), int(m.group(2))
        if kind == "ndcg":
            specs.append(MetricSpec("ndcg", k))
        elif kind == "r_cap":
            specs.append(MetricSpec("recall", k, capped=True))
        else:
            specs.append(MetricSpec("recall", k))
            if capped:
                specs.append(MetricSpec("recall", k, capped=True))
    return list(dict.fromkeys(specs))


@dataclass
class MetricReport:
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)
    aggregate: dict[str, float] = field(default_factory=dict)
    metrics: list[str] = field(default_factory=list)
    no_relevant: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def query_count(self) -> int:
        return len(self.per_query)

    def to_dict(self) -> dict:
        return {
            "metrics": self.metrics,
            "query_count": self.query_count,
            "aggregate": self.aggregate,
            "per_query": self.per_query,
            "no_relevant": self.no_relevant,
            "warnings": self.warnings,
        }

    def format_table(self) -> str:
        width = max([5, *(len(q) for q in self.per_query)])
        header = f"{'query':<{width}}  " + "  ".join(f"{m:>10}" for m in self.metrics)
        lines = [header, "-" * len(header)]
        for qid, values in self.per_query.items():
            lines.append(f"{qid:<{width}}  " + "  ".join(f"{values[m]:>10.4f}" for m in self.metrics))
        lines.append("-" * len(header))
        lines.append(f"{'mean':<{width}}  " + "  ".join(f"{self.aggregate.get(m, 0.0):>10.4f}" for m in self.metrics))
        return "\n".join(lines)

    def to_tsv(self) -> str:
        rows = ["\t".join(["query_id", *self.metrics])]
        for qid, values in self.per_query.items():
            rows.append("\t".join([qid, *(f"{values[m]:.6f}" for m in self.metrics)]))
        rows.append("\t".join(["mean", *(f"{self.aggregate.get(m, 0.0):.6f}" for m in self.metrics)]))
        return "\n".join(rows) + "\n"


def evaluate_rankings(rankings: Mapping[str, Sequence[str]], qrels: Qrels,
                      specs: Iterable[MetricSpec]) -> MetricReport:
    specs = list(specs)
    report = MetricReport(metrics=[s.name for s in specs])
    judged = qrels.by_query()
    if not judged:
        report.warnings.append("qrels are empty; nothing to evaluate")
        log.warning(report.warnings[-1])
        return report
    for qid in sorted(set(rankings) - set(judged)):
        report.warnings.append(f"query {qid} is in the run but has no judgments; skipped")
    for qid, grades in judged.items():
        ranked = rankings.get(qid, [])
        if not any(g > 0 for g in grades.values()):
            report.no_relevant.append(qid)
        report.per_query[qid] = {s.name: s.compute(ranked, grades) for s in specs}
    n = len(report.per_query)
    report.aggregate = {m: sum(v[m] for v in report.per_query.values()) / n for m in report.metrics}
    for w in report.warnings:
        log.warning(w)
    return report


def evaluate_run(run: str | Path | Sequence[RunEntry], qrels: Qrels, specs: Iterable[MetricSpec]) -> MetricReport:
    """Per-query metrics plus means. Judged queries missing from the run score 0."""
    entries = read_run(run) if isinstance(run, (str, Path)) else run
    return evaluate_rankings(run_to_rankings(entries), qrels, specs)


def write_report(report: MetricReport, out_dir: str | Path, figure: bool = True) -> list[Path]:
    """Write report.json, metrics.tsv and (optionally) metrics.png; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.json", out / "metrics.tsv"]
    paths[0].write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    paths[1].write_text(report.to_tsv())
    if figure and report.per_query:
        from .plotting import plot_metric_report

        paths.append(plot_metric_report(report, out / "metrics.png"))
    return paths
