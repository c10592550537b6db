import random

import pytest

from rrr.corpus import Document, DocumentStore
from rrr.llm import ChatResponse, MockBackend, MockRules
from rrr.reranker import (
    SlidingWindowReranker,
    parse_permutation,
    positional_scores,
    window_count,
    window_starts,
)

from conftest import Scripted, make_gateway

QUERY = "q"
STORE = DocumentStore(Document(f"p{i:03d}", f"passage number {i}") for i in range(200))
IDS = STORE.ids()


def oracle_reranker(grades, window=10, step=5):
    backend = MockBackend(MockRules(permutation="oracle", grades={QUERY: grades}), STORE)
    gw = make_gateway(backend)
    return SlidingWindowReranker(gw, STORE, window, step), gw


class RandomPermuter:
    """Answers with a random, sometimes malformed, ranking."""

    def __init__(self, seed):
        self.rng = random.Random(seed)

    def __call__(self, request):
        size = sum(1 for m in request.messages if m.role == "user" and m.content.startswith("["))
        choice = self.rng.random()
        if choice < 0.1:
            return ChatResponse("I cannot rank these.")
        order = list(range(1, size + 1))
        self.rng.shuffle(order)
        if choice < 0.3:
            order = order[: self.rng.randint(0, size)] + [size + 3, order[0] if order else 1]
        return ChatResponse(" > ".join(f"[{i}]" for i in order))


def test_parse_clean_output():
    assert parse_permutation("[2] > [1] > [3]", 3) == ([2, 1, 3], None)


def test_parse_repairs_duplicates_and_out_of_range():
    perm, warning = parse_permutation("[2] > [2] > [9]", 3)
    assert perm == [2, 1, 3]
    assert warning is not None


def test_parse_gibberish_is_identity_with_warning():
    perm, warning = parse_permutation("no ranking here", 3)
    assert perm == [1, 2, 3]
    assert "no usable ranking" in warning


@pytest.mark.parametrize("n,w,s,calls", [(30, 10, 5, 5), (7, 10, 5, 1), (100, 10, 5, 19), (10, 10, 5, 1),
                                         (11, 10, 5, 1), (16, 10, 5, 2), (1, 10, 5, 1)])
def test_window_count_examples(n, w, s, calls):
    assert window_count(n, w, s) == len(window_starts(n, w, s)) == calls


def test_window_starts_go_tail_first_and_cover_everything():
    assert window_starts(30, 10, 5) == [20, 15, 10, 5, 0]
    assert window_starts(23, 10, 5) == [13, 8, 0]
    rng = random.Random(1)
    for _ in range(500):
        w = rng.randint(1, 20)
        s = rng.randint(1, w)
        n = rng.randint(1, 120)
        starts = window_starts(n, w, s)
        assert starts[-1] == 0
        assert len(starts) == (1 if n <= w else (n - w) // s + 1)
        if schedule_covers(n, w, s):
            covered = set()
            for st in starts:
                covered.update(range(st, min(st + w, n)))
            assert covered == set(range(n))


def schedule_covers(n, w, s):
    """Lists the exact-count schedule can sweep end to end: one window, or
    at least two windows that overlap (2s <= w)."""
    return n <= w or (n >= w + s and 2 * s <= w)


def test_one_window_cannot_cover_lists_just_longer_than_it():
    # n=12, w=10, s=5 gets a single call by the count formula
    assert window_starts(12, 10, 5) == [0]
    grades = {d: 0 for d in IDS}
    grades[IDS[10]] = 5
    reranker, _ = oracle_reranker(grades)
    assert reranker.sliding_rerank(QUERY, IDS[:12], "gpt-4").ranked[0] != IDS[10]


def test_window_schedule_rejects_bad_step():
    with pytest.raises(ValueError):
        window_starts(10, 5, 6)
    with pytest.raises(ValueError):
        window_starts(10, 5, 0)


def test_thirty_docs_take_five_gateway_calls():
    reranker, gw = oracle_reranker({d: 0 for d in IDS})
    with gw.recording() as calls:
        result = reranker.sliding_rerank(QUERY, IDS[:30], "gpt-4")
    assert result.calls == len(calls) == 5
    assert gw.ledger_report().row("gpt-4").calls == 5


def test_short_list_is_one_call_and_fully_sorted():
    grades = {d: i % 4 for i, d in enumerate(IDS)}
    reranker, gw = oracle_reranker(grades)
    ids = IDS[:7]
    result = reranker.sliding_rerank(QUERY, ids, "gpt-4")
    assert result.calls == 1
    assert result.ranked == sorted(ids, key=lambda d: -grades[d])


def test_two_phase_call_counts_for_hundred_docs():
    reranker, gw = oracle_reranker({d: 0 for d in IDS})
    result = reranker.two_phase_rerank(QUERY, IDS[:100], "gpt-3.5-turbo", "gpt-4")
    report = gw.ledger_report()
    assert report.row("gpt-3.5-turbo").calls == 19
    assert report.row("gpt-4").calls == 5
    assert result.calls == 24
    assert len(result.ranked) == 100


def test_two_phase_covers_short_lists_entirely():
    grades = {d: 0 for d in IDS}
    grades[IDS[19]] = 3
    reranker, gw = oracle_reranker(grades)
    result = reranker.two_phase_rerank(QUERY, IDS[:20], "gpt-3.5-turbo", "gpt-4")
    strong = [p for p in result.permutations if p["model"] == "gpt-4"]
    assert [p["start"] for p in strong] == [10, 5, 0]
    assert result.ranked[0] == IDS[19]


def test_two_phase_single_document():
    reranker, _ = oracle_reranker({d: 0 for d in IDS})
    result = reranker.two_phase_rerank(QUERY, IDS[:1], "gpt-3.5-turbo", "gpt-4")
    assert result.ranked == IDS[:1]
    assert result.calls == 2


def test_empty_list_is_rejected():
    reranker, _ = oracle_reranker({})
    with pytest.raises(ValueError):
        reranker.sliding_rerank(QUERY, [], "gpt-4")


def test_gibberish_window_keeps_order_and_warns():
    gw = make_gateway(Scripted("cannot do that"))
    reranker = SlidingWindowReranker(gw, STORE)
    result = reranker.sliding_rerank(QUERY, IDS[:3], "gpt-4")
    assert result.ranked == IDS[:3]
    assert len(result.warnings) == 1


def test_rerank_preserves_the_multiset_on_random_lists():
    rng = random.Random(5)
    reranker = SlidingWindowReranker(make_gateway(RandomPermuter(5)), STORE)
    for _ in range(1000):
        ids = rng.sample(IDS, rng.randint(1, 60))
        result = reranker.two_phase_rerank(QUERY, ids, "cheap", "strong", strong_depth=rng.randint(1, 40))
        assert sorted(result.ranked) == sorted(ids)


def test_oracle_best_reaches_rank_one():
    rng = random.Random(9)
    checked = 0
    while checked < 300:
        trial = checked
        n = rng.randint(1, 50)
        ids = rng.sample(IDS, n)
        # distinct grades so the best element is unique
        values = rng.sample(range(1000), n)
        grades = dict(zip(ids, values))
        if trial % 2:
            w = rng.randint(2, 12)
            s = rng.randint(1, w // 2)
        else:
            w, s = 10, 5
        if not schedule_covers(n, w, s):
            continue
        checked += 1
        reranker, _ = oracle_reranker(grades, w, s)
        result = reranker.sliding_rerank(QUERY, ids, "gpt-4")
        assert result.ranked[0] == max(ids, key=grades.get)


def test_full_sort_when_list_fits_one_window():
    rng = random.Random(13)
    for _ in range(200):
        n = rng.randint(1, 10)
        ids = rng.sample(IDS, n)
        grades = {d: rng.randint(0, 3) for d in ids}
        reranker, _ = oracle_reranker(grades)
        assert reranker.sliding_rerank(QUERY, ids, "gpt-4").ranked == sorted(ids, key=lambda d: -grades[d])


def test_positional_scores_strictly_decrease():
    assert positional_scores(["a", "b", "c"]) == [("a", 3.0), ("b", 2.0), ("c", 1.0)]
