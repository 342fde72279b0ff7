from __future__ import annotations

from types import SimpleNamespace

import pytest

from filtereval.corpus import IngestConfig, RawDocument, build_collection
from filtereval.index import Bm25Params, build_index
from filtereval.synthetic import make_collection


def make_index(texts, params=None, **config):
    """Index a list of texts (or (ext_id, text) pairs) held in memory."""
    docs = []
    for i, t in enumerate(texts):
        ext, text = t if isinstance(t, tuple) else (f"d{i}", t)
        docs.append(RawDocument(ext, text))
    return build_index(build_collection(docs, IngestConfig(**config)), params or Bm25Params())


@pytest.fixture(scope="session")
def small_synth():
    """1,000-document synthetic collection with 50 queries."""
    syn = make_collection(n_docs=1_000, n_queries=50, min_query_df=120, seed=7)
    coll = build_collection(syn.docs, IngestConfig(static_scores=syn.static_scores))
    return SimpleNamespace(syn=syn, coll=coll, index=build_index(coll), queries=syn.queries)


@pytest.fixture(scope="session")
def synth():
    """The full synthetic corpus used by the acceptance criteria."""
    syn = make_collection()
    coll = build_collection(syn.docs, IngestConfig(static_scores=syn.static_scores))
    return SimpleNamespace(syn=syn, coll=coll, index=build_index(coll), queries=syn.queries)


def oracle_scores(coll, terms, k1=0.9, b=0.4):
    """BM25 of every document computed from raw token lists, in query-term order."""
    from collections import Counter
    import math

    n = len(coll.docs)
    avg_dl = sum(d.length for d in coll.docs) / n
    terms = list(dict.fromkeys(terms))
    counts = [Counter(d.tokens) for d in coll.docs]
    df = {t: sum(1 for c in counts if c[t]) for t in terms}
    scores = {}
    for d, c in zip(coll.docs, counts):
        s = 0.0
        for t in terms:
            tf = c[t]
            if tf:
                idf = max(0.0, math.log((n - df[t] + 0.5) / (df[t] + 0.5)))
                s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * d.length / avg_dl))
        scores[d.internal_id] = s
    return scores


def oracle_topk(coll, terms, k):
    scores = oracle_scores(coll, terms)
    ranked = sorted(((d, s) for d, s in scores.items() if s > 0), key=lambda r: (-r[1], r[0]))
    return ranked[:k]


def pytest_terminal_summary(terminalreporter):
    verdicts = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            name = getattr(rep, "nodeid", "").split("::")[-1]
            if not name.startswith("test_criterion_"):
                continue
            if outcome == "passed" and rep.when != "call":
                continue
            verdicts[name] = "PASS" if outcome == "passed" and name not in verdicts else "FAIL"
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for name in sorted(verdicts):
            n = int(name.split("_")[2])
            terminalreporter.write_line(f"criterion {n:2d}: {verdicts[name]}  {name}")
