"""Multi-stage retrieval filters and judgment-free filter evaluation."""

from filtereval.corpus import Collection, Document, IngestConfig, load_corpus, tokenize
from filtereval.errors import DataError, FormatError, IndexFileError
from filtereval.filters import (
    FilterSpec,
    Query,
    WandCounters,
    bm25_score,
    boolean_and,
    boolean_static_heap,
    scored_boolean_wand,
    wand_topk,
)
from filtereval.index import Bm25Params, Cursor, InvertedIndex, build_index, load_index, save_index
from filtereval.metrics import MetricSpec, Qrels, Ranking, ScoreResult, evaluate, set_recall
from filtereval.similarity import MedConstraints, MedResult, WeightProfile, med, med_bruteforce, overlap, rbo

__version__ = "0.1.0"

__all__ = [
    "Bm25Params",
    "Collection",
    "Cursor",
    "DataError",
    "Document",
    "FilterSpec",
    "FormatError",
    "IndexFileError",
    "IngestConfig",
    "InvertedIndex",
    "MedConstraints",
    "MedResult",
    "MetricSpec",
    "Qrels",
    "Query",
    "Ranking",
    "ScoreResult",
    "WandCounters",
    "WeightProfile",
    "bm25_score",
    "boolean_and",
    "boolean_static_heap",
    "build_index",
    "evaluate",
    "load_corpus",
    "load_index",
    "med",
    "med_bruteforce",
    "overlap",
    "rbo",
    "save_index",
    "scored_boolean_wand",
    "set_recall",
    "tokenize",
    "wand_topk",
]
