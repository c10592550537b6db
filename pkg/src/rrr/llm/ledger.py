"""Per-model call and token accounting with USD estimates."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field


@dataclass(frozen=True)
class ModelRates:
    """USD per 1000 tokens."""

    input: float
    output: float


DEFAULT_RATES = {
    "gpt-4": ModelRates(0.03, 0.06),
    "gpt-3.5-turbo": ModelRates(0.0015, 0.002),
}


@dataclass
class ModelUsage:
    calls: int = 0
    cached_hits: int = 0
    input_tokens: int = 0
    output_tokens: int = 0


@dataclass(frozen=True)
class CallRecord:
    model: str
    key: str
    cached: bool
    input_tokens: int
    output_tokens: int
    retries: int = 0

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "key": self.key,
            "cached": self.cached,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "retries": self.retries,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CallRecord":
        return cls(d["model"], d["key"], bool(d["cached"]), int(d["input_tokens"]),
                   int(d["output_tokens"]), int(d.get("retries", 0)))


@dataclass(frozen=True)
class CostRow:
    model: str
    calls: int
    cached_hits: int
    input_tokens: int
    output_tokens: int
    cost_usd: float
    priced: bool


@dataclass(frozen=True)
class CostReport:
    rows: tuple[CostRow, ...]

    @property
    def total_usd(self) -> float:
        return sum(r.cost_usd for r in self.rows)

    @property
    def total_calls(self) -> int:
        return sum(r.calls for r in self.rows)

    def row(self, model: str) -> CostRow | None:
        return next((r for r in self.rows if r.model == model), None)

    def to_dict(self) -> dict:
        return {
            "models": {
                r.model: {
                    "calls": r.calls,
                    "cached_hits": r.cached_hits,
                    "input_tokens": r.input_tokens,
                    "output_tokens": r.output_tokens,
                    "cost_usd": round(r.cost_usd, 6),
                    "priced": r.priced,
                }
                for r in self.rows
            },
            "total_calls": self.total_calls,
            "total_usd": round(self.total_usd, 6),
        }

    def format(self) -> str:
        header = f"{'model':<20} {'calls':>7} {'cached':>7} {'in_tok':>10} {'out_tok':>9} {'cost_usd':>10}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            cost = f"{r.cost_usd:.4f}" if r.priced else "n/a"
            lines.append(f"{r.model:<20} {r.calls:>7} {r.cached_hits:>7} {r.input_tokens:>10} "
                         f"{r.output_tokens:>9} {cost:>10}")
        lines.append(f"{'total':<20} {self.total_calls:>7} {'':>7} {'':>10} {'':>9} {self.total_usd:>10.4f}")
        return "\n".join(lines)


@dataclass
class CostLedger:
    rates: dict[str, ModelRates] = field(default_factory=lambda: dict(DEFAULT_RATES))
    usage: dict[str, ModelUsage] = field(default_factory=dict)

    def __post_init__(self):
        self._lock = threading.Lock()

    def record(self, call: CallRecord) -> None:
        with self._lock:
            u = self.usage.setdefault(call.model, ModelUsage())
            if call.cached:
                u.cached_hits += 1
            else:
                u.calls += 1
                u.input_tokens += call.input_tokens
                u.output_tokens += call.output_tokens

    def report(self) -> CostReport:
        with self._lock:
            rows = []
            for model in sorted(self.usage):
                u = self.usage[model]
                rate = self.rates.get(model)
                cost = (u.input_tokens * rate.input + u.output_tokens * rate.output) / 1000 if rate else 0.0
                rows.append(CostRow(model, u.calls, u.cached_hits, u.input_tokens, u.output_tokens,
                                    cost, rate is not None))
        return CostReport(tuple(rows))


def replay(calls, rates: dict[str, ModelRates] | None = None) -> CostLedger:
    """Rebuild a ledger from recorded calls (e.g. read back from traces)."""
    ledger = CostLedger(rates=dict(rates) if rates is not None else dict(DEFAULT_RATES))
    for call in calls:
        ledger.record(call if isinstance(call, CallRecord) else CallRecord.from_dict(call))
    return ledger
