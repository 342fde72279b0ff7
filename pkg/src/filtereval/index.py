"""Immutable inverted index with skipping cursors and BM25 upper bounds.

Postings are split into fixed-size blocks.  Within a block document numbers
are stored as gaps from the previous posting; the last document number of
every block is kept in a skip table so a cursor can gallop over whole blocks
without decoding them.
"""

from __future__ import annotations

import bisect
import io
import json
import math
import struct
import zlib
from array import array
from collections import Counter
from dataclasses import dataclass
from itertools import accumulate
from pathlib import Path
from typing import Iterator, Mapping

from filtereval.corpus import Collection, IngestConfig
from filtereval.errors import IndexFileError

BLOCK_SIZE = 64
END = 1 << 62  # cursor candidate once a list is exhausted; sorts after every doc id

MAGIC = b"CLIX1"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4
    k3: float = 0.0

    def __post_init__(self):
        if not self.k1 > 0:
            raise ValueError("k1 must be positive")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must lie in [0, 1]")
        if self.k3 != 0:
            raise ValueError("only k3 = 0 is supported")


@dataclass(frozen=True)
class DocInfo:
    ext_id: str
    length: int
    static_score: float


def idf(n_docs: int, df: int) -> float:
    """Robertson-Sparck Jones idf, clamped at zero so upper bounds stay non-negative."""
    if df == 0:
        return 0.0
    return max(0.0, math.log((n_docs - df + 0.5) / (df + 0.5)))


class PostingsList:
    """Doc-ordered postings for one term, stored as delta-coded blocks."""

    __slots__ = ("term", "df", "upper_bound", "idf", "block_last", "_gaps", "_tfs")

    def __init__(self, term: str, doc_ids, tfs, upper_bound: float = 0.0, term_idf: float = 0.0):
        if len(doc_ids) != len(tfs):
            raise ValueError("doc_ids and tfs differ in length")
        self.term = term
        self.df = len(doc_ids)
        self.upper_bound = upper_bound
        self.idf = term_idf
        self.block_last: list[int] = []
        self._gaps: list[array] = []
        self._tfs: list[array] = []
        prev = -1
        for start in range(0, self.df, BLOCK_SIZE):
            block = doc_ids[start:start + BLOCK_SIZE]
            gaps = array("I")
            for d in block:
                if d <= prev:
                    raise ValueError(f"postings for {term!r} not strictly ascending")
                gaps.append(d - prev)
                prev = d
            self._gaps.append(gaps)
            self._tfs.append(array("I", tfs[start:start + BLOCK_SIZE]))
            self.block_last.append(prev)

    @property
    def n_blocks(self) -> int:
        return len(self.block_last)

    def decode_block(self, b: int) -> list[int]:
        base = self.block_last[b - 1] if b else -1
        return list(accumulate(self._gaps[b], initial=base))[1:]

    def block_tfs(self, b: int) -> array:
        return self._tfs[b]

    def doc_ids(self) -> list[int]:
        out = []
        for b in range(self.n_blocks):
            out.extend(self.decode_block(b))
        return out

    def tfs(self) -> list[int]:
        out = []
        for t in self._tfs:
            out.extend(t)
        return out

    def entries(self) -> Iterator[tuple[int, int]]:
        for b in range(self.n_blocks):
            yield from zip(self.decode_block(b), self._tfs[b])

    def cursor(self) -> "Cursor":
        return Cursor(self)

    def __eq__(self, other):
        if not isinstance(other, PostingsList):
            return NotImplemented
        return (
            self.term == other.term
            and self.upper_bound == other.upper_bound
            and self.idf == other.idf
            and self.block_last == other.block_last
            and self._gaps == other._gaps
            and self._tfs == other._tfs
        )

    def __repr__(self):
        return f"PostingsList({self.term!r}, df={self.df}, U={self.upper_bound:.4f})"


class Cursor:
    """Forward-only iterator over a postings list.

    ``doc`` holds the current candidate, or ``END`` once the list is
    exhausted.  ``moves`` counts advancing calls that changed position and
    ``blocks_decoded`` counts block decompressions.
    """

    __slots__ = ("postings", "doc", "moves", "blocks_decoded", "_block", "_docs", "_pos")

    def __init__(self, postings: PostingsList):
        self.postings = postings
        self.moves = 0
        self.blocks_decoded = 0
        self._block = -1
        self._docs: list[int] = []
        self._pos = 0
        if postings.df:
            self._load(0)
            self.doc = self._docs[0]
        else:
            self.doc = END

    @property
    def candidate(self) -> int | None:
        return None if self.doc == END else self.doc

    @property
    def at_end(self) -> bool:
        return self.doc == END

    @property
    def tf(self) -> int:
        if self.doc == END:
            raise IndexError("cursor is exhausted")
        return self.postings.block_tfs(self._block)[self._pos]

    def _load(self, b: int) -> None:
        self._block = b
        self._docs = self.postings.decode_block(b)
        self._pos = 0
        self.blocks_decoded += 1

    def _finish(self) -> None:
        self.doc = END

    def f_search(self, x: int) -> int | None:
        """Advance to the first posting with doc id >= x; returns it or None."""
        if self.doc >= x:
            return self.candidate
        self.moves += 1
        block_last = self.postings.block_last
        b = self._block
        if x > block_last[b]:
            # gallop across the skip table, then binary search the bracket
            n = len(block_last)
            lo, step = b + 1, 1
            hi = lo
            while hi < n and block_last[hi] < x:
                lo = hi + 1
                step <<= 1
                hi = b + step
            b = bisect.bisect_left(block_last, x, lo, min(hi, n - 1) + 1)
            if b >= n:
                self._finish()
                return None
            self._load(b)
        self._pos = bisect.bisect_left(self._docs, x, self._pos)
        self.doc = self._docs[self._pos]
        return self.doc

    def successor(self, x: int) -> int | None:
        """Advance to the first posting with doc id > x."""
        return self.f_search(x + 1)

    def next(self) -> int | None:
        """Step to the following posting."""
        if self.doc == END:
            return None
        self.moves += 1
        self._pos += 1
        if self._pos == len(self._docs):
            if self._block + 1 == self.postings.n_blocks:
                self._finish()
                return None
            self._load(self._block + 1)
        self.doc = self._docs[self._pos]
        return self.doc


class InvertedIndex:
    def __init__(self, lexicon: Mapping[str, PostingsList], doc_table: list[DocInfo],
                 params: Bm25Params, tokenizer: Mapping | None = None, ordering: str = "corpus_order"):
        self.lexicon = dict(lexicon)
        self.doc_table = list(doc_table)
        self.params = params
        self.tokenizer = dict(tokenizer or IngestConfig().tokenizer_settings())
        self.ordering = ordering
        self.N = len(self.doc_table)
        total = sum(d.length for d in self.doc_table)
        self.avg_dl = total / self.N if self.N else 0.0
        # per-document BM25 length normaliser k1 * (1 - b + b * dl / avg_dl)
        k1, b = params.k1, params.b
        self.doc_norm = [
            k1 * (1.0 - b + b * d.length / self.avg_dl) if self.avg_dl else k1 for d in self.doc_table
        ]
        self._ext_lookup: dict[str, int] | None = None

    def postings(self, term: str) -> PostingsList | None:
        return self.lexicon.get(term)

    def ext_id(self, doc: int) -> str:
        return self.doc_table[doc].ext_id

    def internal_id(self, ext_id: str) -> int | None:
        if self._ext_lookup is None:
            self._ext_lookup = {d.ext_id: i for i, d in enumerate(self.doc_table)}
        return self._ext_lookup.get(ext_id)

    def ingest_config(self) -> IngestConfig:
        return IngestConfig.from_tokenizer_settings(self.tokenizer)

    def contribution(self, term_idf: float, tf: int, doc: int) -> float:
        return term_idf * (tf * (self.params.k1 + 1.0)) / (tf + self.doc_norm[doc])

    def __eq__(self, other):
        if not isinstance(other, InvertedIndex):
            return NotImplemented
        return (
            self.params == other.params
            and self.doc_table == other.doc_table
            and self.lexicon == other.lexicon
            and self.tokenizer == other.tokenizer
            and self.ordering == other.ordering
        )


def build_index(collection: Collection, params: Bm25Params | None = None) -> InvertedIndex:
    params = params or Bm25Params()
    doc_table = [DocInfo(d.ext_id, d.length, d.static_score) for d in collection.docs]
    docs_of: dict[str, list[int]] = {}
    tfs_of: dict[str, list[int]] = {}
    for doc in collection.docs:
        for term, tf in Counter(doc.tokens).items():
            docs_of.setdefault(term, []).append(doc.internal_id)
            tfs_of.setdefault(term, []).append(tf)

    index = InvertedIndex({}, doc_table, params, collection.config.tokenizer_settings(), collection.ordering)
    lexicon = {}
    for term in sorted(docs_of):
        doc_ids, tfs = docs_of[term], tfs_of[term]
        term_idf = idf(index.N, len(doc_ids))
        ub = max((index.contribution(term_idf, tf, d) for d, tf in zip(doc_ids, tfs)), default=0.0)
        lexicon[term] = PostingsList(term, doc_ids, tfs, ub, term_idf)
    index.lexicon = lexicon
    return index


# -- persistence ---------------------------------------------------------
#
# Layout: MAGIC, u16 version, u16 section count, then per section:
# 4-byte tag, u64 payload length, u32 crc32 of payload, payload.

_SECTION_HDR = struct.Struct("<4sQI")


def _pack_section(tag: bytes, payload: bytes) -> bytes:
    return _SECTION_HDR.pack(tag, len(payload), zlib.crc32(payload)) + payload


def _postings_payload(index: InvertedIndex) -> bytes:
    buf = io.BytesIO()
    for term, pl in index.lexicon.items():
        raw = term.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<IIdd", pl.df, pl.n_blocks, pl.upper_bound, pl.idf))
        buf.write(array("q", pl.block_last).tobytes())
        for b in range(pl.n_blocks):
            gaps, tfs = pl._gaps[b], pl._tfs[b]
            buf.write(struct.pack("<I", len(gaps)))
            buf.write(gaps.tobytes())
            buf.write(tfs.tobytes())
    return buf.getvalue()


def save_index(index: InvertedIndex, path: str | Path) -> None:
    meta = {
        "params": {"k1": index.params.k1, "b": index.params.b, "k3": index.params.k3},
        "tokenizer": index.tokenizer,
        "ordering": index.ordering,
        "n_terms": len(index.lexicon),
        "block_size": BLOCK_SIZE,
    }
    docs = {
        "ext_id": [d.ext_id for d in index.doc_table],
        "length": [d.length for d in index.doc_table],
        "static_score": [d.static_score for d in index.doc_table],
    }
    sections = [
        _pack_section(b"META", json.dumps(meta, sort_keys=True).encode()),
        _pack_section(b"DOCS", json.dumps(docs).encode()),
        _pack_section(b"POST", _postings_payload(index)),
    ]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HH", FORMAT_VERSION, len(sections)))
        for s in sections:
            fh.write(s)


def _read_sections(data: bytes, path) -> dict[bytes, bytes]:
    if data[:len(MAGIC)] != MAGIC:
        raise IndexFileError(f"{path}: not an index file (bad magic)")
    off = len(MAGIC)
    if len(data) < off + 4:
        raise IndexFileError(f"{path}: truncated header")
    version, count = struct.unpack_from("<HH", data, off)
    if version != FORMAT_VERSION:
        raise IndexFileError(f"{path}: unsupported format version {version}")
    off += 4
    sections = {}
    for _ in range(count):
        if len(data) < off + _SECTION_HDR.size:
            raise IndexFileError(f"{path}: truncated section header")
        tag, length, crc = _SECTION_HDR.unpack_from(data, off)
        off += _SECTION_HDR.size
        payload = data[off:off + length]
        if len(payload) != length or zlib.crc32(payload) != crc:
            raise IndexFileError(f"{path}: checksum failure in section {tag.decode(errors='replace')}")
        sections[tag] = payload
        off += length
    if off != len(data):
        raise IndexFileError(f"{path}: trailing bytes after last section")
    for tag in (b"META", b"DOCS", b"POST"):
        if tag not in sections:
            raise IndexFileError(f"{path}: missing section {tag.decode()}")
    return sections


def _unpack_postings(payload: bytes, n_terms: int) -> dict[str, PostingsList]:
    lexicon = {}
    off = 0
    for _ in range(n_terms):
        (tlen,) = struct.unpack_from("<I", payload, off)
        off += 4
        term = payload[off:off + tlen].decode("utf-8")
        off += tlen
        df, n_blocks, ub, term_idf = struct.unpack_from("<IIdd", payload, off)
        off += struct.calcsize("<IIdd")
        block_last = array("q")
        block_last.frombytes(payload[off:off + 8 * n_blocks])
        off += 8 * n_blocks
        pl = PostingsList.__new__(PostingsList)
        pl.term, pl.df, pl.upper_bound, pl.idf = term, df, ub, term_idf
        pl.block_last = block_last.tolist()
        pl._gaps, pl._tfs = [], []
        for _b in range(n_blocks):
            (n,) = struct.unpack_from("<I", payload, off)
            off += 4
            gaps, tfs = array("I"), array("I")
            gaps.frombytes(payload[off:off + gaps.itemsize * n])
            off += gaps.itemsize * n
            tfs.frombytes(payload[off:off + tfs.itemsize * n])
            off += tfs.itemsize * n
            pl._gaps.append(gaps)
            pl._tfs.append(tfs)
        lexicon[term] = pl
    if off != len(payload):
        raise IndexFileError("postings section has unexpected trailing data")
    return lexicon


def load_index(path: str | Path) -> InvertedIndex:
    data = Path(path).read_bytes()
    sections = _read_sections(data, path)
    try:
        meta = json.loads(sections[b"META"])
        docs = json.loads(sections[b"DOCS"])
        lexicon = _unpack_postings(sections[b"POST"], meta["n_terms"])
    except (ValueError, KeyError, struct.error) as exc:
        raise IndexFileError(f"{path}: corrupt index ({exc})") from None
    doc_table = [DocInfo(e, n, s) for e, n, s in zip(docs["ext_id"], docs["length"], docs["static_score"])]
    params = Bm25Params(**meta["params"])
    return InvertedIndex(lexicon, doc_table, params, meta["tokenizer"], meta["ordering"])
