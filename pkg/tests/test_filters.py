import math
import random

import pytest

from conftest import make_index, oracle_scores, oracle_topk
from filtereval.filters import (
    FilterSpec,
    Query,
    bm25_score,
    boolean_and,
    boolean_static_heap,
    exhaustive_topk,
    run_filter,
    scored_boolean_wand,
    wand_topk,
)

THETAS = (1.0, 1.02, 1.05, 1.1, 1.2, 1.5, 2.0)


def index_from_sets(sets, n_docs):
    """Document i contains term t exactly when i is in sets[t]."""
    texts = []
    for i in range(n_docs):
        words = [t for t, members in sets.items() if i in members]
        texts.append(" ".join(words + ["pad"]))
    return make_index(texts)


def q(*terms, qid="q"):
    return Query(qid, terms)


class TestQuery:
    def test_duplicates_removed(self):
        assert q("a", "b", "a").terms == ("a", "b")

    def test_parse_tokenizes(self):
        assert Query.parse("1", "Buying FIRST home").terms == ("buying", "first", "home")

    @pytest.mark.parametrize("kwargs", [{"k": 0}, {"theta": 0.99}, {"method": "maxscore"}])
    def test_filter_spec_validation(self, kwargs):
        args = {"method": "wand", "k": 10, "theta": 1.0, **kwargs}
        with pytest.raises(ValueError):
            FilterSpec(**args)


class TestBm25Score:
    def test_worked_value(self):
        # 10 equal-length docs, "t" in two of them, tf = 2 in doc 0
        texts = ["t t a b", "t c d e"] + [f"x{i} y z w" for i in range(8)]
        idx = make_index(texts)
        assert idx.N == 10 and idx.avg_dl == 4
        expected = math.log(8.5 / 2.5) * (2 * 1.9 / 2.9)
        assert expected == pytest.approx(1.603568, abs=1e-6)
        assert bm25_score(idx, 0, q("t")) == pytest.approx(expected, abs=1e-12)

    def test_no_query_terms(self):
        idx = make_index(["a b", "c d", "e f"])
        assert bm25_score(idx, 0, q("c")) == 0.0
        assert bm25_score(idx, 0, q("unknown")) == 0.0

    def test_duplicate_terms(self):
        idx = make_index(["a b", "c d", "e f", "a a"])
        assert bm25_score(idx, 3, Query("q", ("a", "a"))) == bm25_score(idx, 3, q("a"))

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            bm25_score(make_index(["a"]), 5, q("a"))

    def test_matches_oracle(self, small_synth):
        idx, coll = small_synth.index, small_synth.coll
        query = small_synth.queries[0]
        want = oracle_scores(coll, query.terms)
        for d in range(0, idx.N, 37):
            assert bm25_score(idx, d, query) == pytest.approx(want[d], abs=1e-9)


class TestBooleanAnd:
    SETS = {"s1": {1, 3, 5, 7}, "s2": {3, 4, 5, 9}, "s3": {1, 3, 5, 6}}

    def test_intersection(self):
        idx = index_from_sets(self.SETS, 12)
        assert boolean_and(idx, q("s1", "s2", "s3"), 10) == [3, 5]

    def test_early_exit(self):
        idx = index_from_sets(self.SETS, 12)
        assert boolean_and(idx, q("s1", "s2", "s3"), 1) == [3]

    def test_unknown_term(self):
        idx = index_from_sets(self.SETS, 12)
        assert boolean_and(idx, q("s1", "nope"), 10) == []

    def test_empty_query(self):
        assert boolean_and(index_from_sets(self.SETS, 12), q(), 10) == []

    def test_match_at_largest_initial_candidate(self):
        # the first target is the largest initial candidate; it must be checked, not skipped
        idx = index_from_sets({"x": {3}, "y": {1, 3}}, 5)
        assert boolean_and(idx, q("x", "y"), 10) == [3]

    def test_random_instances_match_naive_intersection(self):
        rng = random.Random(5)
        for _ in range(1_000):
            n_docs = rng.randint(5, 400)
            n_terms = rng.randint(1, 4)
            sets = {f"t{j}": set(rng.sample(range(n_docs), rng.randint(1, n_docs))) for j in range(n_terms)}
            idx = index_from_sets(sets, n_docs)
            want = sorted(set.intersection(*sets.values()))
            full = boolean_and(idx, q(*sets), n_docs)
            assert full == want
            k = rng.randint(1, 20)
            assert boolean_and(idx, q(*sets), k) == full[:k]


class TestBooleanStaticHeap:
    def test_keeps_highest_static(self):
        idx = index_from_sets({"a": {3, 5, 9, 10}, "b": {1, 3, 5, 9}}, 12)
        static = [0.0] * 12
        static[3], static[5], static[9] = 0.1, 0.9, 0.5
        assert boolean_static_heap(idx, q("a", "b"), 2, "static_score_file", static) == [5, 9]

    def test_all_matches_when_k_large(self):
        idx = index_from_sets({"a": {3, 5, 9}, "b": {3, 5, 9, 11}}, 12)
        static = [float(i % 4) for i in range(12)]
        assert boolean_static_heap(idx, q("a", "b"), 50, "static_score_file", static) == [3, 5, 9]

    def test_index_order_equals_boolean_and_on_preordered(self, small_synth):
        idx = small_synth.index
        assert idx.ordering == "static_score_desc"
        for query in small_synth.queries:
            for k in (1, 10, 100):
                assert boolean_static_heap(idx, query, k, "index_order") == boolean_and(idx, query, k)
                # stored static scores are non-increasing in doc id, so the two sources agree
                assert boolean_static_heap(idx, query, k, "static_score_file") == boolean_and(idx, query, k)

    def test_unknown_term(self):
        idx = index_from_sets({"a": {1}}, 3)
        assert boolean_static_heap(idx, q("a", "zzz"), 3) == []

    def test_bad_source(self):
        with pytest.raises(ValueError):
            boolean_static_heap(index_from_sets({"a": {1}}, 3), q("a"), 3, "pagerank")


class TestWand:
    def test_safe_at_theta_one(self, small_synth):
        idx, coll = small_synth.index, small_synth.coll
        for query in small_synth.queries:
            for k in (1, 10, 100):
                got, _ = wand_topk(idx, query, k, 1.0)
                want = oracle_topk(coll, query.terms, k)
                assert [d for d, _ in got] == [d for d, _ in want]
                for (_, s1), (_, s2) in zip(got, want):
                    assert s1 == pytest.approx(s2, abs=1e-9)

    def test_scores_exact_at_every_theta(self, small_synth):
        idx = small_synth.index
        for query in small_synth.queries[:20]:
            for theta in THETAS:
                got, _ = wand_topk(idx, query, 50, theta)
                for d, s in got:
                    assert s == pytest.approx(bm25_score(idx, d, query), abs=1e-9)
                assert [s for _, s in got] == sorted((s for _, s in got), reverse=True)

    def test_prefix_nesting(self, small_synth):
        idx = small_synth.index
        for query in small_synth.queries:
            deep, _ = wand_topk(idx, query, 200, 1.0)
            for k in (1, 7, 50):
                assert wand_topk(idx, query, k, 1.0)[0] == deep[:k]

    def test_work_non_increasing_in_theta(self, small_synth):
        idx = small_synth.index
        for query in small_synth.queries:
            work = [wand_topk(idx, query, 20, th)[1].docs_scored for th in THETAS]
            assert work == sorted(work, reverse=True)

    def test_s_min_non_decreasing(self, small_synth):
        idx = small_synth.index
        for query in small_synth.queries[:10]:
            for theta in (1.0, 1.5):
                trace = wand_topk(idx, query, 10, theta)[1].s_min_trace
                assert trace == sorted(trace)

    def test_huge_theta_admits_only_first_k(self, small_synth):
        idx = small_synth.index
        for query in small_synth.queries[:10]:
            k = 15
            got, counters = wand_topk(idx, query, k, 1e9)
            union = sorted(d for d, s in oracle_scores(small_synth.coll, query.terms).items() if s > 0)
            assert sorted(d for d, _ in got) == union[:k]
            assert counters.heap_inserts == k
            assert counters.docs_scored == k

    def test_k_beyond_matches(self):
        idx = make_index(["a b", "a c", "d e", "b b f", "g h", "i j"])
        got, _ = wand_topk(idx, q("a", "b"), 100, 1.0)
        assert sorted(d for d, _ in got) == [0, 1, 3]
        assert got == exhaustive_topk(idx, q("a", "b"))

    def test_single_term_query_is_exhaustive(self, small_synth):
        idx, coll = small_synth.index, small_synth.coll
        term = max(idx.lexicon.values(), key=lambda pl: pl.df if pl.upper_bound > 0 else 0).term
        for theta in (1.0, 2.0):
            got, _ = wand_topk(idx, q(term), 10, theta)
            assert got == [(d, pytest.approx(s, abs=1e-9)) for d, s in oracle_topk(coll, [term], 10)]

    def test_unknown_terms_dropped(self):
        idx = make_index(["a b", "a c", "d e", "f g"])
        assert wand_topk(idx, q("a", "zzz"), 5)[0] == wand_topk(idx, q("a"), 5)[0]
        assert wand_topk(idx, q("zzz"), 5)[0] == []
        assert wand_topk(idx, q(), 5)[0] == []

    def test_ties_by_doc_id(self):
        idx = make_index(["a x", "b y", "a z", "c w", "a v", "e", "f", "g"])
        got, _ = wand_topk(idx, q("a"), 2)
        assert [d for d, _ in got] == [0, 2]


class TestScoredBooleanWand:
    def test_matches_intersect_then_score_oracle(self, small_synth):
        idx, coll = small_synth.index, small_synth.coll
        for query in small_synth.queries:
            tokens = [set(d.tokens) for d in coll.docs]
            matches = [d for d in range(idx.N) if all(t in tokens[d] for t in query.terms)]
            scores = oracle_scores(coll, query.terms)
            for k in (1, 10, 1000):
                want = sorted(((d, scores[d]) for d in matches), key=lambda r: (-r[1], r[0]))[:k]
                got, counters = scored_boolean_wand(idx, query, k)
                assert [d for d, _ in got] == [d for d, _ in want]
                for (_, s1), (_, s2) in zip(got, want):
                    assert s1 == pytest.approx(s2, abs=1e-9)

    def test_only_conjunctive_matches_scored(self, small_synth):
        idx = small_synth.index
        for query in small_synth.queries:
            n_matches = len(boolean_and(idx, query, idx.N))
            _, counters = scored_boolean_wand(idx, query, idx.N)
            assert counters.docs_scored == n_matches

    def test_top_one(self):
        idx = make_index(["a b", "a b b b", "a", "b", "c", "d", "e", "f"])
        got, _ = scored_boolean_wand(idx, q("a", "b"), 1)
        assert [d for d, _ in got] == [1]

    def test_no_match(self):
        idx = make_index(["a", "b", "c"])
        assert scored_boolean_wand(idx, q("a", "b"), 5)[0] == []


def test_run_filter_dispatch(small_synth):
    idx = small_synth.index
    query = small_synth.queries[3]
    assert run_filter(idx, query, FilterSpec("boolean_and", 5)).docs == boolean_and(idx, query, 5)
    out = run_filter(idx, query, FilterSpec("wand", 5, 1.2))
    ranked, _ = wand_topk(idx, query, 5, 1.2)
    assert out.docs == [d for d, _ in ranked] and out.scores == [s for _, s in ranked]
    assert run_filter(idx, query, FilterSpec("boolean_static_heap", 5)).scores is None
