"""Command-line entry point: ``filtereval <subcommand> ...``.

Exit status is 0 on success, 1 for usage errors and 2 for unreadable or
malformed input data.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import statistics
import sys
from pathlib import Path

from filtereval.corpus import IngestConfig, load_corpus, read_spam_scores, read_static_scores, read_stopwords
from filtereval.errors import DataError, FormatError
from filtereval.filters import METHODS, FilterSpec
from filtereval.harness import (
    DEFAULT_MED_METRIC,
    SweepConfig,
    emit_csv,
    emit_per_query_csv,
    load_queries,
    parse_qrels,
    parse_trec_run,
    run_from_filter,
    sweep,
    write_trec_run,
)
from filtereval.index import Bm25Params, build_index, load_index, save_index
from filtereval.metrics import MetricSpec, evaluate
from filtereval.similarity import OVERLAP_VARIANTS, MedConstraints, WeightProfile, med, overlap, rbo

log = logging.getLogger("filtereval")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _fmt(x: float) -> str:
    return format(x, ".6g")


def _out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline="", encoding="utf-8"), True


def _read_doc_lists(path) -> dict[str, set[str]]:
    """``qid docno`` pairs, one per line."""
    out: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise FormatError(path, lineno, "expected 'qid docno'")
            out.setdefault(parts[0], set()).add(parts[1])
    return out


def cmd_build(args) -> None:
    if args.spam_threshold is not None and args.spam_scores is None:
        raise UsageError("--spam-threshold requires --spam-scores")
    config = IngestConfig(
        stopwords=read_stopwords(args.stopwords) if args.stopwords else None,
        spam_scores=read_spam_scores(args.spam_scores) if args.spam_scores else None,
        spam_threshold=args.spam_threshold,
        static_scores=read_static_scores(args.static_scores) if args.static_scores else None,
        static_tiebreak=args.static_tiebreak,
    )
    collection = load_corpus(args.corpus, config)
    index = build_index(collection, Bm25Params(args.k1, args.b))
    save_index(index, args.out)
    log.info("indexed %d documents, %d terms -> %s", index.N, len(index.lexicon), args.out)


def cmd_filter(args) -> None:
    spec = FilterSpec(args.method, args.k, args.theta)
    index = load_index(args.index)
    queries = load_queries(args.queries, index.ingest_config())
    write_trec_run(run_from_filter(index, queries, spec, args.tag), args.out)


def cmd_med(args) -> None:
    profile = WeightProfile.parse(args.metric)
    run_a, run_b = parse_trec_run(args.run_a), parse_trec_run(args.run_b)
    forced_rel = _read_doc_lists(args.force_relevant) if args.force_relevant else {}
    forced_non = _read_doc_lists(args.force_nonrelevant) if args.force_nonrelevant else {}
    qids = list(dict.fromkeys(run_b.qids() + run_a.qids()))
    fh, close = _out(args.out)
    try:
        w = csv.writer(fh)
        w.writerow(["qid", "med", "direction"])
        for qid in qids:
            constraints = MedConstraints(forced_rel.get(qid, frozenset()), forced_non.get(qid, frozenset()))
            r = med(run_a.docs(qid), run_b.docs(qid), profile, constraints)
            w.writerow([qid, _fmt(r.value), r.direction])
    finally:
        if close:
            fh.close()


def cmd_rbo(args) -> None:
    run_a, run_b = parse_trec_run(args.run_a), parse_trec_run(args.run_b)
    w = csv.writer(sys.stdout)
    w.writerow(["qid", "base", "residual", "ext"])
    for qid in dict.fromkeys(run_a.qids() + run_b.qids()):
        r = rbo(run_a.docs(qid), run_b.docs(qid), args.p)
        w.writerow([qid, _fmt(r.base), _fmt(r.residual), _fmt(r.ext)])


def cmd_overlap(args) -> None:
    run_a, run_b = parse_trec_run(args.run_a), parse_trec_run(args.run_b)
    w = csv.writer(sys.stdout)
    w.writerow(["qid", args.variant])
    for qid in dict.fromkeys(run_a.qids() + run_b.qids()):
        try:
            value = overlap(run_a.docs(qid)[:args.k], run_b.docs(qid)[:args.k], args.variant)
        except ValueError:
            value = math.nan
        w.writerow([qid, _fmt(value)])


def cmd_evaluate(args) -> None:
    spec = MetricSpec.parse(args.metric)
    run, qrels = parse_trec_run(args.run), parse_qrels(args.qrels)
    w = csv.writer(sys.stdout)
    header = ["qid", spec.label()] + (["residual"] if spec.kind == "RBP" else [])
    w.writerow(header)
    values = []
    for qid in run.qids():
        r = evaluate(spec, run.ranking(qid), qrels)
        values.append(r.value)
        w.writerow([qid, _fmt(r.value)] + ([_fmt(r.residual)] if spec.kind == "RBP" else []))
    if values:
        w.writerow(["all", _fmt(statistics.fmean(values))] + ([""] if spec.kind == "RBP" else []))


def cmd_sweep(args) -> None:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    specs = []
    for m in methods:
        if m == "wand":
            specs.extend(FilterSpec(m, 1, theta) for theta in args.thetas)
        else:
            specs.append(FilterSpec(m, 1))
    index = load_index(args.index)
    queries = load_queries(args.queries, index.ingest_config())
    config = SweepConfig(
        filter_specs=specs,
        depths=args.depths,
        queries=queries,
        gold=parse_trec_run(args.gold),
        metric=WeightProfile.parse(args.metric),
        timing_repeats=args.repeats,
        final_stage_ms_per_doc=args.final_ms_per_doc,
    )

    def progress(r):
        log.info("%s k=%d theta=%g: mean MED %.4f, median %.3f ms", r.method, r.k, r.theta, r.med_mean, r.time_median_ms)

    records = sweep(index, config, progress)
    emit_csv(records, args.out_summary)
    if args.out_per_query:
        emit_per_query_csv(records, args.out_per_query)


def cmd_synth(args) -> None:
    from filtereval.synthetic import make_collection

    syn = make_collection(n_docs=args.docs, n_queries=args.queries, min_query_df=args.min_query_df,
                          seed=args.seed)
    for name, path in syn.write(args.out_dir).items():
        log.info("wrote %s: %s", name, path)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="filtereval", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("build", help="index a JSONL corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--stopwords")
    s.add_argument("--static-scores")
    s.add_argument("--static-tiebreak", choices=["doc_length", "ext_id"], default="doc_length")
    s.add_argument("--spam-scores")
    s.add_argument("--spam-threshold", type=int)
    s.add_argument("--k1", type=float, default=0.9)
    s.add_argument("--b", type=float, default=0.4)
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("filter", help="run a filter over a query file, writing a TREC run")
    s.add_argument("--index", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--method", required=True, choices=METHODS)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--theta", type=float, default=1.0)
    s.add_argument("--tag")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_filter)

    s = sub.add_parser("med", help="maximized effectiveness difference between two runs")
    s.add_argument("--run-a", required=True)
    s.add_argument("--run-b", required=True)
    s.add_argument("--metric", default=DEFAULT_MED_METRIC, help="rbp:P, dcg:K or p:K")
    s.add_argument("--force-relevant")
    s.add_argument("--force-nonrelevant")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_med)

    s = sub.add_parser("rbo", help="rank-biased overlap between two runs")
    s.add_argument("--run-a", required=True)
    s.add_argument("--run-b", required=True)
    s.add_argument("--p", type=float, required=True)
    s.set_defaults(func=cmd_rbo)

    s = sub.add_parser("overlap", help="set overlap of the top k of two runs")
    s.add_argument("--run-a", required=True)
    s.add_argument("--run-b", required=True)
    s.add_argument("--variant", choices=OVERLAP_VARIANTS, default="jaccard")
    s.add_argument("--k", type=int, required=True)
    s.set_defaults(func=cmd_overlap)

    s = sub.add_parser("evaluate", help="score a run against qrels")
    s.add_argument("--run", required=True)
    s.add_argument("--qrels", required=True)
    s.add_argument("--metric", required=True, help="rbp:P, dcg:K, ndcg:K, p:K, ap, rr or err:K")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="efficiency/effectiveness grid over methods, depths and thetas")
    s.add_argument("--index", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--gold", required=True)
    s.add_argument("--methods", required=True, help="comma-separated filter methods")
    s.add_argument("--depths", type=_int_list, default=[20, 50, 100, 200, 500, 1000, 2000, 5000, 10000])
    s.add_argument("--thetas", type=_float_list, default=[1.0, 1.02, 1.05, 1.1, 1.2, 1.5, 2.0])
    s.add_argument("--metric", default=DEFAULT_MED_METRIC)
    s.add_argument("--final-ms-per-doc", type=float, default=0.02)
    s.add_argument("--repeats", type=int, default=1)
    s.add_argument("--out-summary", required=True)
    s.add_argument("--out-per-query")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("synth", help="write the synthetic test collection")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--docs", type=int, default=10_000)
    s.add_argument("--queries", type=int, default=60)
    s.add_argument("--min-query-df", type=int, help="default: min(1200, docs / 8)")
    s.add_argument("--seed", type=int, default=20150809)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"filtereval: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"filtereval: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # invalid parameter values (metric strings, k, theta, p, ...)
        print(f"filtereval: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
