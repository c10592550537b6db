"""Report figures. Everything renders off-screen to files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    # stable bytes across runs
    "svg.hashsalt": "rrr",
    "path.simplify": True,
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_metric_report(report, path: str | Path) -> Path:
    """Mean of each metric as a bar, with per-query values scattered on top."""
    metrics = report.metrics
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(3.0, 1.1 * len(metrics) + 1), 3.0))
        means = [report.aggregate.get(m, 0.0) for m in metrics]
        ax.bar(range(len(metrics)), means, color="#9bb7d4", edgecolor="#3d5a80", width=0.6, label="mean")
        for i, m in enumerate(metrics):
            values = [v[m] for v in report.per_query.values()]
            offsets = _spread(len(values))
            ax.scatter([i + o for o in offsets], values, s=10, color="#293241", zorder=3,
                       label="per query" if i == 0 else None)
        ax.set_xticks(range(len(metrics)))
        ax.set_xticklabels(metrics)
        ax.set_ylim(0, 1.15)
        ax.set_ylabel("score")
        ax.set_title(f"{report.query_count} queries")
        ax.legend(loc="upper center", ncol=2, frameon=False)
        return _save(fig, path)


def plot_cost_report(cost, path: str | Path) -> Path:
    rows = list(cost.rows)
    with plt.rc_context(STYLE):
        fig, (left, right) = plt.subplots(1, 2, figsize=(6.6, 2.8), gridspec_kw={"wspace": 0.45})
        names = [r.model for r in rows]
        left.bar(names, [r.calls for r in rows], color="#9bb7d4", label="backend calls")
        left.bar(names, [r.cached_hits for r in rows], bottom=[r.calls for r in rows],
                 color="#e0fbfc", edgecolor="#3d5a80", label="cache hits")
        left.set_ylabel("calls")
        left.set_ylim(0, 1.3 * max([r.calls + r.cached_hits for r in rows], default=1) or 1)
        left.legend(loc="upper center", ncol=2, frameon=False)
        right.bar(names, [r.cost_usd for r in rows], color="#ee6c4d")
        right.set_ylabel("USD")
        right.set_title(f"total ${cost.total_usd:.4f}")
        for ax in (left, right):
            ax.tick_params(axis="x", rotation=20)
        return _save(fig, path)


def plot_accumulation(traces: Sequence, path: str | Path) -> Path:
    """Size of the accumulated set after each rewrite round, one line per query."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 2.8))
        for trace in traces:
            sizes = [it["accumulated"] for it in trace.iterations]
            ax.plot(range(1, len(sizes) + 1), sizes, marker="o", ms=3, lw=1, label=trace.query_id)
        ax.set_xlabel("iteration")
        ax.set_ylabel("documents kept")
        ax.xaxis.set_major_locator(MaxNLocator(integer=True))
        ax.yaxis.set_major_locator(MaxNLocator(integer=True))
        if 0 < len(traces) <= 10:
            ax.legend(frameon=False)
        return _save(fig, path)


def _spread(n: int, width: float = 0.3) -> list[float]:
    if n <= 1:
        return [0.0] * n
    return [-width / 2 + width * i / (n - 1) for i in range(n)]
