import json
import threading

import httpx
import pytest

from rrr.corpus import Document
from rrr.llm import (
    CallCache,
    CallRecord,
    ChatRequest,
    ChatResponse,
    CostLedger,
    Gateway,
    Message,
    MockBackend,
    MockRules,
    PermanentError,
    RetryableError,
    TransportError,
    UnhandledPrompt,
    replay,
)
from rrr.llm.http import OpenAIChatBackend
from rrr.relevance import relevance_request
from rrr.reranker import permutation_request
from rrr.rewriter import RewriteHistory, render_prompt

from conftest import Scripted, make_gateway


def req(text="hello", model="gpt-4", **kw):
    return ChatRequest(model, (Message("user", text),), **kw)


def test_second_identical_call_is_cached():
    backend = Scripted("hi", tokens=(3, 1))
    gw = make_gateway(backend)
    first = gw.complete(req())
    second = gw.complete(req())
    assert (first.content, first.cached) == ("hi", False)
    assert (second.content, second.cached) == ("hi", True)
    assert backend.calls == 1


def test_key_covers_every_request_field():
    base = req()
    assert base.key() == req().key()
    assert len({base.key(), req("other").key(), req(model="gpt-3.5-turbo").key(),
                req(temperature=0.5).key(), req(max_output_tokens=20).key()}) == 5


def test_retries_then_succeeds():
    sleeps = []
    backend = Scripted(RetryableError("500"), RetryableError("500"), "ok")
    gw = make_gateway(backend, sleep=sleeps.append, backoff_base=1.0)
    assert gw.complete(req()).content == "ok"
    assert gw.retry_count == 2
    assert backend.calls == 3
    assert sleeps == [1.0, 2.0]


def test_jitter_stays_within_bounds():
    sleeps = []
    backend = Scripted(RetryableError("429"), RetryableError("429"), RetryableError("429"), "ok")
    gw = make_gateway(backend, sleep=sleeps.append, jitter=True, backoff_base=2.0)
    gw.complete(req())
    for attempt, delay in enumerate(sleeps):
        base = 2.0 * 2**attempt
        assert 0.5 * base <= delay <= 1.5 * base


def test_permanent_error_is_not_retried():
    backend = Scripted(PermanentError(400, "bad request"))
    gw = make_gateway(backend)
    with pytest.raises(PermanentError) as err:
        gw.complete(req())
    assert err.value.status == 400
    assert backend.calls == 1


def test_exhausted_retries_raise_transport_error():
    backend = Scripted(RetryableError("503"))
    gw = make_gateway(backend, retries=5)
    with pytest.raises(TransportError):
        gw.complete(req())
    assert backend.calls == 6
    assert gw.retry_count == 5


def test_failed_call_is_not_cached():
    backend = Scripted(PermanentError(400, "x"), "fine")
    gw = make_gateway(backend)
    with pytest.raises(PermanentError):
        gw.complete(req())
    assert gw.complete(req()).content == "fine"


def test_cache_persists_across_instances(tmp_path):
    path = tmp_path / "cache.jsonl"
    backend = Scripted("persisted", tokens=(5, 2))
    Gateway(backend, cache=CallCache(path)).complete(req())
    fresh = Scripted("should not be used")
    got = Gateway(fresh, cache=CallCache(path)).complete(req())
    assert (got.content, got.cached) == ("persisted", True)
    assert fresh.calls == 0


def test_cache_skips_torn_line(tmp_path):
    path = tmp_path / "cache.jsonl"
    cache = CallCache(path)
    cache.put("k", ChatResponse("v", 1, 1))
    with open(path, "a") as fh:
        fh.write('{"key": "broken"')
    reloaded = CallCache(path)
    assert len(reloaded) == 1
    assert reloaded.get("k").content == "v"


def test_concurrent_identical_calls_hit_backend_once():
    gate = threading.Event()

    class Slow:
        calls = 0

        def __call__(self, request):
            Slow.calls += 1
            gate.wait(1)
            return ChatResponse("x")

    gw = make_gateway(Slow())
    threads = [threading.Thread(target=gw.complete, args=(req(),)) for _ in range(8)]
    for t in threads:
        t.start()
    gate.set()
    for t in threads:
        t.join()
    assert Slow.calls == 1


def test_ledger_prices_strong_and_cheap_calls():
    ledger = CostLedger()
    for i in range(9):
        ledger.record(CallRecord("gpt-4", f"s{i}", False, 2000, 0))
    for i in range(320):
        ledger.record(CallRecord("gpt-3.5-turbo", f"c{i}", False, 1000, 0))
    report = ledger.report()
    assert report.row("gpt-4").cost_usd == pytest.approx(0.54, abs=1e-9)
    assert report.row("gpt-3.5-turbo").cost_usd == pytest.approx(0.48, abs=1e-9)
    assert report.total_usd == pytest.approx(1.02, abs=1e-9)


def test_cached_calls_cost_nothing():
    backend = Scripted("a", tokens=(1000, 0))
    gw = make_gateway(backend)
    gw.complete(req())
    before = gw.ledger_report().total_usd
    gw.complete(req())
    report = gw.ledger_report()
    assert report.total_usd == before
    assert report.row("gpt-4").cached_hits == 1


def test_unknown_model_is_unpriced():
    ledger = CostLedger()
    ledger.record(CallRecord("local-llm", "k", False, 500, 10))
    row = ledger.report().row("local-llm")
    assert row.priced is False and row.cost_usd == 0.0
    assert "n/a" in ledger.report().format()


def test_replay_reproduces_ledger():
    backend = Scripted("a", "b", "c", tokens=(7, 3))
    gw = make_gateway(backend)
    with gw.recording() as calls:
        gw.complete(req("1"))
        gw.complete(req("2", model="gpt-3.5-turbo"))
        gw.complete(req("1"))
    rebuilt = replay([c.to_dict() for c in calls])
    assert rebuilt.report() == gw.ledger_report()


def test_http_backend_wire_format():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={
            "choices": [{"message": {"role": "assistant", "content": "<Score>4</Score>"}}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 3},
        })

    backend = OpenAIChatBackend("http://llm.local/v1/", "secret", transport=httpx.MockTransport(handler))
    resp = backend(req("q", max_output_tokens=20))
    assert resp == ChatResponse("<Score>4</Score>", 12, 3)
    assert seen["url"] == "http://llm.local/v1/chat/completions"
    assert seen["auth"] == "Bearer secret"
    assert seen["body"] == {"model": "gpt-4", "messages": [{"role": "user", "content": "q"}],
                            "temperature": 0.0, "max_tokens": 20}


@pytest.mark.parametrize("status,error", [(429, RetryableError), (500, RetryableError), (503, RetryableError),
                                          (400, PermanentError), (401, PermanentError)])
def test_http_backend_status_mapping(status, error):
    backend = OpenAIChatBackend("http://x", "k", transport=httpx.MockTransport(lambda r: httpx.Response(status)))
    with pytest.raises(error):
        backend(req())


def test_http_backend_transport_failure_is_retryable():
    def handler(request):
        raise httpx.ConnectError("refused")

    backend = OpenAIChatBackend("http://x", "k", transport=httpx.MockTransport(handler))
    with pytest.raises(RetryableError):
        backend(req())


def test_http_backend_needs_a_key(monkeypatch):
    monkeypatch.delenv("RRR_API_KEY", raising=False)
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    with pytest.raises(ValueError):
        OpenAIChatBackend("http://x")


SODA = Document("d1", "Diet soda and weight gain", None)
SKY = Document("d2", "The sky is blue", None)
SWEET = Document("d3", "Sweeteners alter appetite", None)


def test_mock_overlap_relevance_without_shared_words():
    backend = MockBackend(MockRules(relevance="overlap"), [SKY])
    resp = backend(relevance_request("diet soda", SKY.render(), "gpt-3.5-turbo"))
    assert resp.content == "<Score>1</Score>"


def test_mock_overlap_relevance_full_match():
    backend = MockBackend(MockRules(relevance="overlap"), [SODA])
    resp = backend(relevance_request("diet soda", SODA.render(), "gpt-3.5-turbo"))
    assert resp.content == "<Score>5</Score>"


def test_mock_oracle_permutation():
    rules = MockRules(permutation="oracle", grades={"diet soda": {"d1": 1, "d2": 0, "d3": 2}})
    backend = MockBackend(rules, [SODA, SKY, SWEET])
    # passages in window order d2, d1, d3
    resp = backend(permutation_request("diet soda", [SKY.render(), SODA.render(), SWEET.render()], "gpt-4"))
    assert resp.content == "[3] > [2] > [1]"


def test_mock_scripted_rewrite_is_verbatim():
    rules = MockRules(scripts={"diet soda": ["artificial sweeteners weight", "second"]})
    backend = MockBackend(rules)
    history = RewriteHistory("diet soda", 5).append_round("diet soda", ["some doc"])
    assert backend(render_prompt(history)).content == "<Rewrite>artificial sweeteners weight</Rewrite>"


def test_mock_script_exhausted_raises():
    backend = MockBackend(MockRules(scripts={"diet soda": []}))
    history = RewriteHistory("diet soda", 5).append_round("diet soda", [])
    with pytest.raises(UnhandledPrompt):
        backend(render_prompt(history))


def test_mock_unknown_prompt_raises():
    with pytest.raises(UnhandledPrompt):
        MockBackend(MockRules())(req("tell me a joke"))


def test_mock_counts_whitespace_tokens():
    backend = MockBackend(MockRules(relevance="overlap"), [SKY])
    request = relevance_request("diet soda", SKY.render(), "gpt-3.5-turbo")
    resp = backend(request)
    assert resp.input_tokens == sum(len(m.content.split()) for m in request.messages)
    assert resp.output_tokens == 1
