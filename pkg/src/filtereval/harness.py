"""Trade-off experiments: filter output composed with a gold final stage.

The final stage is simulated by a reference run: it reorders whatever the
filter passes on by the reference run's own scores.  MED between that
composed ranking and the unfiltered reference ranking bounds the
effectiveness lost to filtering.
"""

from __future__ import annotations

import csv
import gc
import logging
import math
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from filtereval.corpus import IngestConfig
from filtereval.errors import FormatError
from filtereval.filters import FilterSpec, Query, exhaustive_topk, run_filter
from filtereval.index import InvertedIndex
from filtereval.metrics import Qrels, Ranking
from filtereval.similarity import WeightProfile, med

log = logging.getLogger(__name__)

DEFAULT_MED_METRIC = "rbp:0.95"
SUMMARY_HEADER = [
    "method", "k", "theta", "med_mean", "med_p10", "med_q1", "med_median", "med_q3", "med_p90",
    "time_median_ms", "time_p10_ms", "time_p90_ms", "combined_time_ms",
]
PER_QUERY_HEADER = ["method", "k", "theta", "qid", "med", "time_ms", "result_size", "unmatched"]


# -- TREC files ----------------------------------------------------------

@dataclass
class GoldRun:
    """Per-query rankings of (docno, score), best first."""

    rankings: dict[str, list[tuple[str, float]]] = field(default_factory=dict)
    tag: str = "run"

    def qids(self) -> list[str]:
        return list(self.rankings)

    def docs(self, qid: str) -> list[str]:
        return [d for d, _ in self.rankings.get(qid, ())]

    def ranking(self, qid: str, depth: int | None = None) -> Ranking:
        docs = self.docs(qid)
        return Ranking(qid, tuple(docs if depth is None else docs[:depth]))


def parse_trec_run(path: str | Path) -> GoldRun:
    """Read ``qid Q0 docno rank score tag`` lines; rank is ignored and re-derived from score."""
    rankings: dict[str, list[tuple[str, float]]] = {}
    seen: dict[str, set[str]] = {}
    tag = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise FormatError(path, lineno, f"expected 6 columns, got {len(parts)}")
            qid, _q0, docno, _rank, score_text, run_tag = parts
            try:
                score = float(score_text)
            except ValueError:
                raise FormatError(path, lineno, f"unparsable score {score_text!r}") from None
            if math.isnan(score):
                raise FormatError(path, lineno, "score is NaN")
            docs = seen.setdefault(qid, set())
            if docno in docs:
                raise FormatError(path, lineno, f"duplicate document {docno!r} for query {qid}")
            docs.add(docno)
            rankings.setdefault(qid, []).append((docno, score))
            if tag is None:
                tag = run_tag
    for entries in rankings.values():
        entries.sort(key=lambda e: -e[1])  # stable: ties keep file order
    return GoldRun(rankings, tag or "run")


def write_trec_run(run: GoldRun, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for qid, entries in run.rankings.items():
            for rank, (docno, score) in enumerate(entries, 1):
                fh.write(f"{qid} Q0 {docno} {rank} {score!r} {run.tag}\n")


def parse_qrels(path: str | Path) -> Qrels:
    """Read ``qid iter docno grade`` lines; a repeated (qid, docno) overrides with a warning."""
    qrels = Qrels()
    overrides = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise FormatError(path, lineno, f"expected 4 columns, got {len(parts)}")
            qid, _iter, docno, grade_text = parts
            try:
                grade = int(grade_text)
            except ValueError:
                raise FormatError(path, lineno, f"non-integer grade {grade_text!r}") from None
            if grade < 0:
                raise FormatError(path, lineno, f"negative grade {grade}")
            if docno in qrels.for_query(qid):
                overrides += 1
                log.warning("%s:%d: overriding earlier judgment for (%s, %s)", path, lineno, qid, docno)
            qrels.set(qid, docno, grade)
    qrels.warnings = overrides
    return qrels


def write_qrels(qrels: Qrels, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for qid, docs in qrels.grades.items():
            for docno, grade in docs.items():
                fh.write(f"{qid} 0 {docno} {grade}\n")


def load_queries(path: str | Path, config: IngestConfig | None = None) -> list[Query]:
    """Read ``qid<TAB>query text`` lines, tokenized like the index."""
    queries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            qid, sep, text = line.partition("\t")
            if not sep or not qid:
                raise FormatError(path, lineno, "expected qid<TAB>query text")
            queries.append(Query.parse(qid, text, config))
    return queries


def write_queries(queries: Iterable[Query], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for q in queries:
            fh.write(f"{q.qid}\t{q.text or ' '.join(q.terms)}\n")


def run_from_filter(index: InvertedIndex, queries: Sequence[Query], spec: FilterSpec, tag: str | None = None) -> GoldRun:
    """Execute a filter over a query stream; Boolean sets get score -rank."""
    rankings = {}
    for q in queries:
        out = run_filter(index, q, spec)
        if out.scores is None:
            scores = [-float(r) for r in range(1, len(out.docs) + 1)]
        else:
            scores = out.scores
        rankings[q.qid] = [(index.ext_id(d), s) for d, s in zip(out.docs, scores)]
    return GoldRun(rankings, tag or spec.method)


def exhaustive_run(index: InvertedIndex, queries: Sequence[Query], depth: int | None = None, tag: str = "bm25") -> GoldRun:
    """Full BM25 ranking of every query; the self-consistent gold run."""
    rankings = {}
    for q in queries:
        rankings[q.qid] = [(index.ext_id(d), s) for d, s in exhaustive_topk(index, q, depth)]
    return GoldRun(rankings, tag)


# -- composition ---------------------------------------------------------

@dataclass(frozen=True)
class Composition:
    ranking: Ranking
    unmatched: int
    missing_qid: bool = False


def compose(gold: GoldRun, qid: str, filter_output: Iterable[str], k2: int | None = None) -> Composition:
    """Gold ranking restricted to the filter's documents, optionally cut at k2."""
    passed = set(filter_output)
    if qid not in gold.rankings:
        return Composition(Ranking(qid, ()), unmatched=len(passed), missing_qid=True)
    gold_docs = gold.docs(qid)
    kept = [d for d in gold_docs if d in passed]
    unmatched = len(passed) - len(kept)
    if k2 is not None:
        kept = kept[:k2]
    return Composition(Ranking(qid, tuple(kept)), unmatched)


# -- sweeps --------------------------------------------------------------

def nearest_rank(sorted_values: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile of an ascending sequence."""
    if not sorted_values:
        return math.nan
    rank = max(1, math.ceil(pct / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


def summarize(values: Sequence[float]) -> dict[str, float]:
    s = sorted(values)
    if not s:
        return dict.fromkeys(("mean", "p10", "q1", "median", "q3", "p90"), math.nan)
    return {
        "mean": statistics.fmean(s),
        "p10": nearest_rank(s, 10),
        "q1": nearest_rank(s, 25),
        "median": statistics.median(s),
        "q3": nearest_rank(s, 75),
        "p90": nearest_rank(s, 90),
    }


@dataclass
class SweepConfig:
    filter_specs: list[FilterSpec]  # k of each spec is replaced by every entry of depths
    depths: list[int]
    queries: list[Query]
    gold: GoldRun
    metric: WeightProfile = field(default_factory=lambda: WeightProfile.parse(DEFAULT_MED_METRIC))
    timing_repeats: int = 1
    final_stage_ms_per_doc: float = 0.02

    def __post_init__(self):
        if not self.depths or any(k < 1 for k in self.depths):
            raise ValueError("depths must be positive")
        if list(self.depths) != sorted(set(self.depths)):
            raise ValueError("depths must be strictly ascending")
        if self.timing_repeats < 1:
            raise ValueError("timing_repeats must be >= 1")
        if self.final_stage_ms_per_doc < 0:
            raise ValueError("final_stage_ms_per_doc must be >= 0")


@dataclass(frozen=True)
class QueryOutcome:
    qid: str
    med: float
    time_ms: float
    result_size: int
    unmatched: int
    docs_scored: int = 0


@dataclass
class TradeoffRecord:
    method: str
    k: int
    theta: float
    per_query: list[QueryOutcome]
    med_mean: float
    med_p10: float
    med_q1: float
    med_median: float
    med_q3: float
    med_p90: float
    time_median_ms: float
    time_p10_ms: float
    time_p90_ms: float
    mean_result_size: float
    combined_time_ms: float

    @classmethod
    def from_outcomes(cls, spec: FilterSpec, outcomes: list[QueryOutcome], ms_per_doc: float) -> "TradeoffRecord":
        m = summarize([o.med for o in outcomes])
        t = summarize([o.time_ms for o in outcomes])
        mean_size = statistics.fmean(o.result_size for o in outcomes) if outcomes else 0.0
        return cls(
            method=spec.method, k=spec.k, theta=spec.theta, per_query=outcomes,
            med_mean=m["mean"], med_p10=m["p10"], med_q1=m["q1"], med_median=m["median"],
            med_q3=m["q3"], med_p90=m["p90"],
            time_median_ms=t["median"], time_p10_ms=t["p10"], time_p90_ms=t["p90"],
            mean_result_size=mean_size,
            combined_time_ms=t["median"] + ms_per_doc * mean_size,
        )


def combined_cost(record: TradeoffRecord, ms_per_doc: float) -> float:
    """Filter time plus a per-document allowance for the final stage."""
    if ms_per_doc < 0:
        raise ValueError("ms_per_doc must be >= 0")
    return record.time_median_ms + ms_per_doc * record.mean_result_size


def _timed_stream(index, queries, spec, repeats):
    """Per-query median wall time (ms) over ``repeats`` passes, plus the last outputs."""
    times = [[] for _ in queries]
    outputs = [None] * len(queries)
    clock = time.perf_counter
    for _ in range(repeats):
        for i, q in enumerate(queries):
            t0 = clock()
            out = run_filter(index, q, spec)
            times[i].append((clock() - t0) * 1000.0)
            outputs[i] = out
    return [statistics.median(t) for t in times], outputs


def sweep(index: InvertedIndex, config: SweepConfig, progress=None) -> list[TradeoffRecord]:
    """Run every (filter, depth) cell over the query stream and aggregate MED and timing."""
    records = []
    gold_rankings = {q.qid: config.gold.docs(q.qid) for q in config.queries}
    for base_spec in config.filter_specs:
        for k in config.depths:
            spec = replace(base_spec, k=k)
            for q in config.queries:  # untimed warm-up pass
                run_filter(index, q, spec)
            gc.collect()
            gc_was_enabled = gc.isenabled()
            gc.disable()
            try:
                times, outputs = _timed_stream(index, config.queries, spec, config.timing_repeats)
            finally:
                if gc_was_enabled:
                    gc.enable()
            outcomes = []
            for q, t_ms, out in zip(config.queries, times, outputs):
                passed = [index.ext_id(d) for d in out.docs]
                comp = compose(config.gold, q.qid, passed)
                value = med(comp.ranking.docs, gold_rankings[q.qid], config.metric).value
                outcomes.append(QueryOutcome(q.qid, value, t_ms, len(out.docs), comp.unmatched,
                                             out.counters.docs_scored))
            record = TradeoffRecord.from_outcomes(spec, outcomes, config.final_stage_ms_per_doc)
            records.append(record)
            if progress is not None:
                progress(record)
    return records


# -- reports -------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(x, ".6g")


def emit_csv(records: Sequence[TradeoffRecord], path: str | Path) -> None:
    if not records:
        raise ValueError("no records to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for r in records:
            w.writerow([
                r.method, r.k, _fmt(r.theta), _fmt(r.med_mean), _fmt(r.med_p10), _fmt(r.med_q1),
                _fmt(r.med_median), _fmt(r.med_q3), _fmt(r.med_p90), _fmt(r.time_median_ms),
                _fmt(r.time_p10_ms), _fmt(r.time_p90_ms), _fmt(r.combined_time_ms),
            ])


def emit_per_query_csv(records: Sequence[TradeoffRecord], path: str | Path) -> None:
    if not records:
        raise ValueError("no records to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PER_QUERY_HEADER)
        for r in records:
            for o in r.per_query:
                w.writerow([r.method, r.k, _fmt(r.theta), o.qid, _fmt(o.med), _fmt(o.time_ms),
                            o.result_size, o.unmatched])


def read_summary_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["k"] = int(row["k"])
        for key in SUMMARY_HEADER[2:]:
            row[key] = float(row[key])
    return rows
