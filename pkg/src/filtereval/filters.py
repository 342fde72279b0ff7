"""First-stage filters: Boolean conjunction variants and (aggressive) WAND.

Every filter reads an immutable :class:`InvertedIndex` and allocates its own
cursors, so distinct queries may be evaluated concurrently.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Sequence

from filtereval.corpus import IngestConfig, tokenize
from filtereval.index import END, Cursor, InvertedIndex

METHODS = ("boolean_and", "boolean_static_heap", "wand", "scored_boolean_wand")

# Slack on the pivot test, covering rounding between summing upper bounds in
# cursor order and summing contributions in query-term order.
_PIVOT_SLACK = 1e-12


@dataclass(frozen=True)
class Query:
    qid: str
    terms: tuple[str, ...]
    text: str = ""

    def __post_init__(self):
        # k3 = 0: a repeated query term carries no extra weight
        object.__setattr__(self, "terms", tuple(dict.fromkeys(self.terms)))

    @classmethod
    def parse(cls, qid: str, text: str, config: IngestConfig | None = None) -> "Query":
        return cls(qid, tuple(tokenize(text, config)), text)


@dataclass(frozen=True)
class FilterSpec:
    method: str
    k: int
    theta: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown filter method {self.method!r}; expected one of {METHODS}")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.theta >= 1.0:
            raise ValueError("theta must be >= 1")


@dataclass
class WandCounters:
    docs_scored: int = 0
    postings_advanced: int = 0
    heap_inserts: int = 0
    s_min_trace: list[float] = field(default_factory=list, repr=False)


def bm25_score(index: InvertedIndex, doc: int, query: Query) -> float:
    """Exact BM25 score of one document, summed in query-term order."""
    if not 0 <= doc < index.N:
        raise IndexError(f"document {doc} out of range (N={index.N})")
    score = 0.0
    for term in query.terms:
        pl = index.postings(term)
        if pl is None:
            continue
        c = Cursor(pl)
        if c.f_search(doc) == doc:
            score += index.contribution(pl.idf, c.tf, doc)
    return score


def _conjunctive_cursors(index: InvertedIndex, query: Query) -> list[Cursor] | None:
    if not query.terms:
        return None
    lists = [index.postings(t) for t in query.terms]
    if any(pl is None for pl in lists):
        return None
    return [Cursor(pl) for pl in lists]


def _intersect(cursors: list[Cursor]):
    """Yield conjunctive matches in ascending doc order (adaptive intersection).

    Cursors are kept sorted by candidate; the largest candidate is the target
    that every other list is forwarded to.  Successor() on the last list is
    taken only after a match, so a target is never skipped unchecked.
    """
    cursors.sort(key=lambda c: c.doc)
    x = cursors[-1].doc
    while x != END:
        if cursors[0].doc == x:
            yield x
            x = cursors[-1].successor(x)
            if x is None:
                return
        for c in cursors[:-1]:
            c.f_search(x)
        cursors.sort(key=lambda c: c.doc)
        x = cursors[-1].doc


def _moves(cursors: Sequence[Cursor]) -> int:
    return sum(c.moves for c in cursors)


def boolean_and(index: InvertedIndex, query: Query, k: int, counters: WandCounters | None = None) -> list[int]:
    """First k conjunctive matches in index order, stopping as soon as k are found."""
    if k < 1:
        raise ValueError("k must be at least 1")
    cursors = _conjunctive_cursors(index, query)
    if cursors is None:
        return []
    out = []
    for doc in _intersect(cursors):
        out.append(doc)
        if len(out) == k:
            break
    if counters is not None:
        counters.postings_advanced += _moves(cursors)
    return out


def boolean_static_heap(index: InvertedIndex, query: Query, k: int, score_source: str = "index_order",
                        static_scores: Sequence[float] | None = None,
                        counters: WandCounters | None = None) -> list[int]:
    """The k conjunctive matches with the highest static score, in index order.

    ``score_source="index_order"`` ranks earlier documents higher;
    ``"static_score_file"`` uses the static scores stored in the index unless
    an explicit ``static_scores`` sequence (indexed by doc id) is supplied.
    The whole intersection is traversed.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if score_source == "index_order":
        key = lambda d: -d  # noqa: E731
    elif score_source == "static_score_file":
        table = static_scores if static_scores is not None else [d.static_score for d in index.doc_table]
        key = lambda d: table[d]  # noqa: E731
    else:
        raise ValueError(f"unknown score_source {score_source!r}")
    cursors = _conjunctive_cursors(index, query)
    if cursors is None:
        return []
    heap: list[tuple[float, int, int]] = []
    for doc in _intersect(cursors):
        entry = (key(doc), -doc, doc)
        if len(heap) < k:
            heapq.heappush(heap, entry)
        elif entry > heap[0]:
            heapq.heapreplace(heap, entry)
        else:
            continue
        if counters is not None:
            counters.heap_inserts += 1
    if counters is not None:
        counters.postings_advanced += _moves(cursors)
    return sorted(e[2] for e in heap)


def _ranked(heap) -> list[tuple[int, float]]:
    # heap entries are (score, -doc); best first means score desc, doc asc
    return [(-neg, s) for s, neg in sorted(heap, reverse=True)]


def wand_topk(index: InvertedIndex, query: Query, k: int, theta: float = 1.0) -> tuple[list[tuple[int, float]], WandCounters]:
    """Document-at-a-time top-k BM25 with the WAND pivot test at threshold theta * s_min.

    Only documents with a positive score are returned.  With theta = 1 the
    result is exactly the exhaustive top k (ties broken by ascending doc id).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not theta >= 1.0:
        raise ValueError("theta must be >= 1")
    counters = WandCounters()
    # (term position, cursor); terms that cannot contribute are dropped
    active = []
    for pos, term in enumerate(query.terms):
        pl = index.postings(term)
        if pl is not None and pl.df and pl.upper_bound > 0.0:
            active.append((pos, Cursor(pl)))
    if not active:
        return [], counters
    if len(active) == 1:
        theta = 1.0  # a single list is scanned exhaustively; theta has nothing to trade
    cursors = [c for _, c in active]
    order = {id(c): pos for pos, c in active}
    heap: list[tuple[float, int]] = []
    s_min = 0.0
    contribution = index.contribution

    while True:
        cursors.sort(key=lambda c: c.doc)
        t = theta * s_min
        acc = 0.0
        pivot = -1
        for i, c in enumerate(cursors):
            if c.doc == END:
                break
            acc += c.postings.upper_bound
            if acc >= t * (1.0 - _PIVOT_SLACK):
                pivot = i
                break
        if pivot < 0:
            break
        pdoc = cursors[pivot].doc
        if cursors[0].doc == pdoc:
            aligned = [c for c in cursors if c.doc == pdoc]
            aligned.sort(key=lambda c: order[id(c)])
            score = 0.0
            for c in aligned:
                score += contribution(c.postings.idf, c.tf, pdoc)
            counters.docs_scored += 1
            if score > s_min:
                entry = (score, -pdoc)
                if len(heap) < k:
                    heapq.heappush(heap, entry)
                else:
                    heapq.heapreplace(heap, entry)
                counters.heap_inserts += 1
                if len(heap) == k:
                    s_min = heap[0][0]
                    counters.s_min_trace.append(s_min)
            for c in aligned:
                c.next()
        else:
            # move the rarest list ahead of the pivot up to the pivot document
            behind = [c for c in cursors[:pivot] if c.doc < pdoc]
            lagging = min(behind, key=lambda c: (c.postings.df, order[id(c)]))
            lagging.f_search(pdoc)
    counters.postings_advanced = _moves(cursors)
    return _ranked(heap), counters


def scored_boolean_wand(index: InvertedIndex, query: Query, k: int) -> tuple[list[tuple[int, float]], WandCounters]:
    """BM25 top k restricted to documents that contain every query term."""
    if k < 1:
        raise ValueError("k must be at least 1")
    counters = WandCounters()
    cursors = _conjunctive_cursors(index, query)
    if cursors is None:
        return [], counters
    in_term_order = list(cursors)
    bound = sum(c.postings.upper_bound for c in cursors)
    contribution = index.contribution
    heap: list[tuple[float, int]] = []
    for doc in _intersect(cursors):
        if len(heap) == k and bound <= heap[0][0]:
            # no remaining match can strictly beat the heap's entry threshold
            break
        score = 0.0
        for c in in_term_order:
            score += contribution(c.postings.idf, c.tf, doc)
        counters.docs_scored += 1
        entry = (score, -doc)
        if len(heap) < k:
            heapq.heappush(heap, entry)
        elif score > heap[0][0]:
            heapq.heapreplace(heap, entry)
        else:
            continue
        counters.heap_inserts += 1
    counters.postings_advanced = _moves(cursors)
    return _ranked(heap), counters


@dataclass
class FilterOutput:
    """Documents in the order the filter emits them (scores only for ranked filters)."""

    docs: list[int]
    scores: list[float] | None
    counters: WandCounters


def run_filter(index: InvertedIndex, query: Query, spec: FilterSpec) -> FilterOutput:
    if spec.method == "boolean_and":
        counters = WandCounters()
        return FilterOutput(boolean_and(index, query, spec.k, counters), None, counters)
    if spec.method == "boolean_static_heap":
        counters = WandCounters()
        docs = boolean_static_heap(index, query, spec.k, "static_score_file", counters=counters)
        return FilterOutput(docs, None, counters)
    if spec.method == "wand":
        ranked, counters = wand_topk(index, query, spec.k, spec.theta)
    else:
        ranked, counters = scored_boolean_wand(index, query, spec.k)
    return FilterOutput([d for d, _ in ranked], [s for _, s in ranked], counters)


def exhaustive_topk(index: InvertedIndex, query: Query, k: int | None = None) -> list[tuple[int, float]]:
    """Score every document term-at-a-time and keep those with a positive score.

    Reference ranking for the WAND safety checks and for building gold runs.
    """
    acc: dict[int, list[float]] = {}
    for pos, term in enumerate(query.terms):
        pl = index.postings(term)
        if pl is None:
            continue
        for doc, tf in pl.entries():
            acc.setdefault(doc, [0.0] * len(query.terms))[pos] = index.contribution(pl.idf, tf, doc)
    scored = []
    for doc, parts in acc.items():
        s = 0.0
        for p in parts:
            s += p
        if s > 0.0:
            scored.append((doc, s))
    scored.sort(key=lambda r: (-r[1], r[0]))
    return scored if k is None else scored[:k]
