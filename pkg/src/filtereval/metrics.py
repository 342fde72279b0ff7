"""Judged effectiveness metrics over ranked lists and document sets.

Unjudged documents are scored as non-relevant.  RBP is binary (grade >= 1
counts as relevant); DCG uses raw grades as gains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

KINDS = ("RBP", "DCG", "NDCG", "P", "AP", "RR", "ERR")
_NEEDS_CUTOFF = {"DCG", "NDCG", "P", "ERR"}


class Qrels:
    """Relevance grades keyed by query id, then document id."""

    def __init__(self, grades: Mapping[str, Mapping[str, int]] | None = None):
        self.grades: dict[str, dict[str, int]] = {}
        self.warnings = 0  # overridden duplicate judgments seen while parsing
        for qid, docs in (grades or {}).items():
            for doc, g in docs.items():
                self.set(qid, doc, g)

    def set(self, qid: str, doc: str, grade: int) -> None:
        if grade < 0:
            raise ValueError(f"negative grade for ({qid}, {doc})")
        self.grades.setdefault(qid, {})[doc] = int(grade)

    def for_query(self, qid: str) -> dict[str, int]:
        return self.grades.get(qid, {})

    def judged(self, qid: str) -> set[str]:
        return set(self.for_query(qid))

    def relevant(self, qid: str) -> set[str]:
        return {d for d, g in self.for_query(qid).items() if g >= 1}

    def max_grade(self) -> int:
        return max((g for docs in self.grades.values() for g in docs.values()), default=0)

    def __contains__(self, qid) -> bool:
        return qid in self.grades


@dataclass(frozen=True)
class Ranking:
    qid: str
    docs: tuple[str, ...]

    def __post_init__(self):
        docs = tuple(self.docs)
        if len(set(docs)) != len(docs):
            raise ValueError(f"duplicate documents in ranking for query {self.qid}")
        object.__setattr__(self, "docs", docs)

    def __len__(self):
        return len(self.docs)


@dataclass(frozen=True)
class MetricSpec:
    kind: str
    p: float | None = None
    cutoff: int | None = None
    grade_max: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown metric {self.kind!r}")
        if self.kind == "RBP":
            if self.p is None or not 0.0 < self.p < 1.0:
                raise ValueError("RBP needs a persistence p in (0, 1)")
        elif self.p is not None:
            raise ValueError(f"{self.kind} takes no p parameter")
        if self.kind in _NEEDS_CUTOFF:
            if self.cutoff is None or self.cutoff < 1:
                raise ValueError(f"{self.kind} needs a positive cutoff")
        elif self.cutoff is not None:
            raise ValueError(f"{self.kind} takes no cutoff")
        if self.grade_max is not None and self.kind != "ERR":
            raise ValueError("grade_max applies to ERR only")

    @classmethod
    def parse(cls, text: str) -> "MetricSpec":
        """Parse ``rbp:0.8``, ``dcg:20``, ``ndcg:10``, ``p:10``, ``err:20``, ``ap``, ``rr``."""
        name, _, arg = text.strip().partition(":")
        kind = name.upper()
        if kind == "RBP":
            return cls("RBP", p=float(arg))
        if kind in _NEEDS_CUTOFF:
            return cls(kind, cutoff=int(arg))
        if arg:
            raise ValueError(f"{kind} takes no argument")
        return cls(kind)

    def label(self) -> str:
        if self.kind == "RBP":
            return f"RBP{self.p:g}"
        if self.cutoff is not None:
            return f"{self.kind}@{self.cutoff}"
        return self.kind


@dataclass(frozen=True)
class ScoreResult:
    value: float
    residual: float = 0.0
    flags: frozenset[str] = field(default_factory=frozenset)


def relevance_vector(ranking: Ranking | Sequence[str], qrels: Qrels, qid: str | None = None) -> list[tuple[int, bool]]:
    """Per-position (grade, judged) pairs; unjudged positions carry grade 0."""
    if isinstance(ranking, Ranking):
        qid = ranking.qid if qid is None else qid
        docs: Iterable[str] = ranking.docs
    else:
        docs = ranking
    judged = qrels.for_query(qid)
    return [(judged.get(d, 0), d in judged) for d in docs]


def rbp(rel: Sequence[int], p: float) -> tuple[float, float]:
    """(value, residual) for a binary relevance sequence."""
    value = 0.0
    w = 1.0 - p
    for r in rel:
        if r:
            value += w
        w *= p
    return value, p ** len(rel)


def dcg(gains: Sequence[float], cutoff: int) -> float:
    return sum(g / math.log2(i + 2) for i, g in enumerate(gains[:cutoff]))


def err(grades: Sequence[int], cutoff: int, grade_max: int) -> float:
    """Expected reciprocal rank under the cascade model."""
    denom = 2.0 ** grade_max
    stop_prob = 1.0
    total = 0.0
    for r, g in enumerate(grades[:cutoff], 1):
        ri = (2.0 ** g - 1.0) / denom
        total += stop_prob * ri / r
        stop_prob *= 1.0 - ri
    return total


def evaluate(spec: MetricSpec, ranking: Ranking, qrels: Qrels) -> ScoreResult:
    judged = qrels.for_query(ranking.qid)
    grades = [judged.get(d, 0) for d in ranking.docs]
    binary = [1 if g >= 1 else 0 for g in grades]
    kind = spec.kind

    if kind == "RBP":
        value, residual = rbp(binary, spec.p)
        return ScoreResult(value, residual)
    if kind == "DCG":
        return ScoreResult(dcg(grades, spec.cutoff))
    if kind == "NDCG":
        ideal = dcg(sorted(judged.values(), reverse=True), spec.cutoff)
        if ideal == 0.0:
            return ScoreResult(0.0, flags=frozenset({"no-relevant"}))
        return ScoreResult(dcg(grades, spec.cutoff) / ideal)
    if kind == "P":
        return ScoreResult(sum(binary[:spec.cutoff]) / spec.cutoff)
    if kind == "AP":
        n_rel = sum(1 for g in judged.values() if g >= 1)
        if n_rel == 0:
            return ScoreResult(0.0, flags=frozenset({"no-relevant"}))
        hits = 0
        total = 0.0
        for i, r in enumerate(binary, 1):
            if r:
                hits += 1
                total += hits / i
        return ScoreResult(total / n_rel)
    if kind == "RR":
        for i, r in enumerate(binary, 1):
            if r:
                return ScoreResult(1.0 / i)
        return ScoreResult(0.0)
    # ERR
    gmax = spec.grade_max if spec.grade_max is not None else qrels.max_grade()
    if gmax <= 0:
        return ScoreResult(0.0, flags=frozenset({"no-relevant"}))
    return ScoreResult(err(grades, spec.cutoff, gmax))


def set_recall(doc_set: Iterable[str], qrels: Qrels, qid: str) -> ScoreResult:
    """Fraction of the query's relevant documents that made it into ``doc_set``."""
    relevant = qrels.relevant(qid)
    if not relevant:
        return ScoreResult(0.0, flags=frozenset({"no-relevant"}))
    return ScoreResult(len(relevant & set(doc_set)) / len(relevant))
