"""Deterministic synthetic test collection.

Documents draw words from a Zipf-distributed vocabulary, with a few bursty
"topic" words repeated inside each document so that term frequencies vary.
Static scores are heavy-tailed and independent of content, like link-based
priors; spam scores are uniform integers in [0, 99].
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from filtereval.corpus import RawDocument, write_corpus
from filtereval.filters import Query


@dataclass
class SyntheticCollection:
    docs: list[RawDocument]
    static_scores: dict[str, float]
    spam_scores: dict[str, int]
    queries: list[Query]

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        from filtereval.harness import write_queries

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "corpus": out / "corpus.jsonl",
            "static": out / "static.tsv",
            "spam": out / "spam.tsv",
            "queries": out / "queries.tsv",
        }
        write_corpus(self.docs, paths["corpus"])
        with open(paths["static"], "w", encoding="utf-8") as fh:
            for ext, s in self.static_scores.items():
                fh.write(f"{ext}\t{s!r}\n")
        with open(paths["spam"], "w", encoding="utf-8") as fh:
            for ext, s in self.spam_scores.items():
                fh.write(f"{ext}\t{s}\n")
        write_queries(self.queries, paths["queries"])
        return paths


def word(rank: int) -> str:
    """Vocabulary entry for a 0-based frequency rank."""
    return f"w{rank}"


def make_collection(n_docs: int = 10_000, vocab_size: int = 8_000, zipf_s: float = 1.05,
                    mean_length: float = 80.0, n_queries: int = 60, min_query_df: int | None = None,
                    seed: int = 20150809) -> SyntheticCollection:
    """Build documents and a query set.

    Queries have 1-4 distinct terms drawn from the frequent part of the
    vocabulary; a query is resampled until at least ``min_query_df``
    documents contain one of its positively weighted terms (document
    frequency below half the collection), so that deep filter depths are
    always reachable.  It defaults to ``min(1200, n_docs // 8)``.
    """
    if min_query_df is None:
        min_query_df = min(1_200, n_docs // 8)
    rng = np.random.default_rng(seed)
    ranks = np.arange(1, vocab_size + 1, dtype=float)
    probs = ranks ** -zipf_s
    probs /= probs.sum()

    lengths = np.maximum(5, rng.lognormal(np.log(mean_length) - 0.18, 0.6, size=n_docs).astype(int))
    docs = []
    postings: list[set[int]] = [set() for _ in range(vocab_size)]
    for i, n in enumerate(lengths):
        body = rng.choice(vocab_size, size=n, p=probs)
        # a handful of mid-frequency topic words, each repeated a few times
        n_topics = rng.integers(1, 4)
        topics = rng.integers(20, 2_000, size=n_topics)
        bursts = [np.full(rng.integers(2, 9), t) for t in topics]
        tokens = np.concatenate([body, *bursts])
        rng.shuffle(tokens)
        for t in np.unique(tokens):
            postings[t].add(i)
        docs.append(RawDocument(f"SYN-{i:06d}", " ".join(word(t) for t in tokens)))

    ext_ids = [d.ext_id for d in docs]
    static = rng.pareto(1.5, size=n_docs)
    static_scores = {e: float(round(s, 6)) for e, s in zip(ext_ids, static)}
    spam_scores = {e: int(s) for e, s in zip(ext_ids, rng.integers(0, 100, size=n_docs))}

    pool = np.arange(20, 1_500)
    pool_p = probs[pool] / probs[pool].sum()
    queries = []
    attempts = 0
    while len(queries) < n_queries:
        attempts += 1
        if attempts > 1_000 * n_queries:
            raise ValueError(f"cannot find queries matching {min_query_df} documents; lower min_query_df")
        n_terms = int(rng.integers(1, 5))
        terms = rng.choice(pool, size=n_terms, replace=False, p=pool_p)
        union = set().union(*(postings[t] for t in terms if 2 * len(postings[t]) < n_docs))
        if len(union) < min_query_df:
            continue
        text = " ".join(word(t) for t in terms)
        queries.append(Query(f"q{len(queries) + 1:03d}", tuple(word(t) for t in terms), text))
    return SyntheticCollection(docs, static_scores, spam_scores, queries)
