"""Corpus ingestion: tokenizing, spam pruning and static-score pre-ordering.

Documents are numbered densely from 0.  When static scores are supplied the
collection is renumbered in descending static-score order, so that a Boolean
traversal in index order visits high-quality documents first.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from filtereval.errors import DataError, FormatError

log = logging.getLogger(__name__)

# Unicode letters and digits; underscore is a word character but not alphanumeric.
_TOKEN_RE = re.compile(r"[^\W_]+")

STEMMERS = ("none", "lowercase_only")
TIEBREAKS = ("doc_length", "ext_id")


@dataclass(frozen=True)
class RawDocument:
    ext_id: str
    text: str


@dataclass(frozen=True)
class IngestConfig:
    stopwords: frozenset[str] | None = None
    stemmer: str = "none"
    spam_scores: Mapping[str, int] | None = None
    spam_threshold: int | None = None
    static_scores: Mapping[str, float] | None = None
    static_tiebreak: str = "doc_length"

    def __post_init__(self):
        if self.stemmer not in STEMMERS:
            raise ValueError(f"unknown stemmer {self.stemmer!r}; expected one of {STEMMERS}")
        if self.static_tiebreak not in TIEBREAKS:
            raise ValueError(f"unknown static_tiebreak {self.static_tiebreak!r}")
        if self.spam_threshold is not None and self.spam_scores is None:
            raise ValueError("spam_threshold requires spam_scores")
        if self.stopwords is not None and not isinstance(self.stopwords, frozenset):
            object.__setattr__(self, "stopwords", frozenset(self.stopwords))

    def tokenizer_settings(self) -> dict:
        """The subset of the configuration that queries must share with the index."""
        return {
            "stopwords": sorted(self.stopwords) if self.stopwords is not None else None,
            "stemmer": self.stemmer,
        }

    @classmethod
    def from_tokenizer_settings(cls, settings: Mapping) -> "IngestConfig":
        stop = settings.get("stopwords")
        return cls(
            stopwords=frozenset(stop) if stop is not None else None,
            stemmer=settings.get("stemmer", "none"),
        )


@dataclass(frozen=True)
class Document:
    internal_id: int
    ext_id: str
    tokens: tuple[str, ...]
    length: int
    static_score: float


@dataclass(frozen=True)
class Collection:
    docs: tuple[Document, ...]
    ordering: str  # "corpus_order" | "static_score_desc"
    config: IngestConfig = field(default_factory=IngestConfig)
    warnings: Mapping[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.docs)


def tokenize(text: str, config: IngestConfig | None = None) -> list[str]:
    """Lowercased alphanumeric runs, minus configured stopwords."""
    terms = _TOKEN_RE.findall(text.lower())
    # "none" and "lowercase_only" both reduce to the lowercasing above; a real
    # stemmer would hook in here.
    if config is not None and config.stopwords:
        stop = config.stopwords
        terms = [t for t in terms if t not in stop]
    return terms


def read_corpus(path: str | Path) -> list[RawDocument]:
    """Parse a JSON Lines corpus of ``{"id": ..., "text": ...}`` objects."""
    docs = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict) or not isinstance(obj.get("id"), str) or not isinstance(obj.get("text"), str):
                raise FormatError(path, lineno, 'expected an object with string fields "id" and "text"')
            ext_id = obj["id"]
            if not ext_id:
                raise FormatError(path, lineno, "empty document id")
            if ext_id in seen:
                raise FormatError(path, lineno, f"duplicate document id {ext_id!r}")
            seen.add(ext_id)
            docs.append(RawDocument(ext_id, obj["text"]))
    return docs


def write_corpus(docs: Iterable[RawDocument], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps({"id": doc.ext_id, "text": doc.text}, ensure_ascii=False))
            fh.write("\n")


def _read_tsv(path, convert) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(path, lineno, f"expected 2 tab-separated fields, got {len(parts)}")
            try:
                out[parts[0]] = convert(parts[1])
            except ValueError:
                raise FormatError(path, lineno, f"unparsable value {parts[1]!r}") from None
    return out


def read_static_scores(path: str | Path) -> dict[str, float]:
    return _read_tsv(path, float)


def read_spam_scores(path: str | Path) -> dict[str, int]:
    return _read_tsv(path, int)


def read_stopwords(path: str | Path) -> frozenset[str]:
    with open(path, encoding="utf-8") as fh:
        return frozenset(w.strip() for w in fh if w.strip())


def build_collection(raw_docs: Sequence[RawDocument], config: IngestConfig | None = None) -> Collection:
    """Tokenize, prune and order an in-memory list of documents."""
    config = config or IngestConfig()
    ids = [d.ext_id for d in raw_docs]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate document ids in corpus")
    known = set(ids)
    warnings = {}
    if config.spam_scores is not None:
        warnings["unknown_spam_ids"] = sum(1 for e in config.spam_scores if e not in known)
    if config.static_scores is not None:
        warnings["unknown_static_ids"] = sum(1 for e in config.static_scores if e not in known)
    for key, count in warnings.items():
        if count:
            log.warning("%d score entries reference unknown documents (%s)", count, key)

    kept = raw_docs
    if config.spam_threshold is not None:
        spam = config.spam_scores
        threshold = config.spam_threshold
        # strictly greater: a document scored exactly at the threshold is pruned
        kept = [d for d in raw_docs if spam.get(d.ext_id, 0) > threshold]

    tokenized = [(d.ext_id, tuple(tokenize(d.text, config))) for d in kept]
    if config.static_scores is not None:
        static = config.static_scores
        scored = [(ext, toks, float(static.get(ext, 0.0))) for ext, toks in tokenized]
        if config.static_tiebreak == "doc_length":
            scored.sort(key=lambda r: (-r[2], -len(r[1]), r[0]))
        else:
            scored.sort(key=lambda r: (-r[2], r[0]))
        ordering = "static_score_desc"
    else:
        scored = [(ext, toks, 0.0) for ext, toks in tokenized]
        ordering = "corpus_order"

    docs = tuple(
        Document(internal_id=i, ext_id=ext, tokens=toks, length=len(toks), static_score=score)
        for i, (ext, toks, score) in enumerate(scored)
    )
    return Collection(docs=docs, ordering=ordering, config=config, warnings=warnings)


def load_corpus(corpus_path: str | Path, config: IngestConfig | None = None) -> Collection:
    return build_collection(read_corpus(corpus_path), config)
