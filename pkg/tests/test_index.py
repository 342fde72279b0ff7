import bisect
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_index
from filtereval.corpus import Collection
from filtereval.errors import IndexFileError
from filtereval.index import BLOCK_SIZE, Bm25Params, Cursor, PostingsList, build_index, load_index, save_index


def bm25_oracle(n_docs, df, tf, dl, avg_dl, k1=0.9, b=0.4):
    idf = max(0.0, math.log((n_docs - df + 0.5) / (df + 0.5)))
    return idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avg_dl))


def test_build_small():
    idx = make_index(["a b a", "b c"])
    assert {t: list(pl.entries()) for t, pl in idx.lexicon.items()} == {
        "a": [(0, 2)],
        "b": [(0, 1), (1, 1)],
        "c": [(1, 1)],
    }
    assert idx.N == 2
    assert idx.avg_dl == 2.5
    assert idx.lexicon["b"].df == 2


def test_build_empty():
    idx = build_index(Collection(docs=(), ordering="corpus_order"))
    assert idx.N == 0
    assert idx.lexicon == {}


def test_build_single_doc():
    idx = make_index(["x x x"])
    assert list(idx.lexicon["x"].entries()) == [(0, 3)]
    assert idx.avg_dl == 3


@pytest.mark.parametrize("kwargs", [{"k1": 0}, {"b": 1.5}, {"b": -0.1}, {"k3": 7}])
def test_bm25_params_validation(kwargs):
    with pytest.raises(ValueError):
        Bm25Params(**kwargs)


def test_upper_bounds_are_exact_maxima(small_synth):
    idx = small_synth.index
    for term, pl in idx.lexicon.items():
        best = max(bm25_oracle(idx.N, pl.df, tf, idx.doc_table[d].length, idx.avg_dl) for d, tf in pl.entries())
        assert pl.upper_bound == pytest.approx(best, abs=1e-9)
        assert pl.upper_bound >= 0.0


def test_doc_ids_in_range(small_synth):
    idx = small_synth.index
    for pl in idx.lexicon.values():
        ids = pl.doc_ids()
        assert all(0 <= d < idx.N for d in ids)
        assert ids == sorted(set(ids))
        assert pl.df == len(ids)
    assert idx.avg_dl == pytest.approx(sum(d.length for d in idx.doc_table) / idx.N)


def test_build_is_deterministic(small_synth, tmp_path):
    idx = small_synth.index
    again = build_index(small_synth.coll)
    save_index(idx, tmp_path / "a.idx")
    save_index(again, tmp_path / "b.idx")
    assert (tmp_path / "a.idx").read_bytes() == (tmp_path / "b.idx").read_bytes()


def cursor_over(ids):
    return Cursor(PostingsList("t", list(ids), [1] * len(ids)))


class TestCursor:
    def test_successor(self):
        c = cursor_over([1, 3, 5, 7])
        assert c.f_search(3) == 3
        assert c.successor(3) == 5

    def test_successor_past_end(self):
        c = cursor_over([1, 3, 5, 7])
        assert c.successor(7) is None
        assert c.at_end and c.candidate is None

    def test_successor_before_begin(self):
        assert cursor_over([2, 4]).successor(0) == 2

    def test_f_search(self):
        assert cursor_over([1, 3, 5, 7]).f_search(4) == 5
        assert cursor_over([1, 3, 5, 7]).f_search(5) == 5
        assert cursor_over([1, 3]).f_search(9) is None

    def test_never_moves_backwards(self):
        c = cursor_over([1, 3, 5, 7])
        c.f_search(6)
        assert c.f_search(2) == 7

    def test_empty_list(self):
        c = cursor_over([])
        assert c.at_end
        assert c.f_search(0) is None

    def test_tf_follows_position(self):
        pl = PostingsList("t", [2, 9, 400], [5, 6, 7])
        c = Cursor(pl)
        assert c.tf == 5
        c.f_search(10)
        assert (c.doc, c.tf) == (400, 7)

    def test_next_walks_every_posting(self):
        ids = list(range(0, 3 * BLOCK_SIZE + 5, 3))
        c = cursor_over(ids)
        seen = [c.doc]
        while c.next() is not None:
            seen.append(c.doc)
        assert seen == ids

    def test_long_jump_is_sublinear(self):
        ids = list(range(0, 200_000, 2))
        c = cursor_over(ids)
        assert c.f_search(199_990) == 199_990
        # one decode at construction and one for the target block
        assert c.blocks_decoded == 2

    def test_matches_linear_scan_oracle(self):
        rng = random.Random(11)
        for _ in range(1_000):
            ids = sorted(rng.sample(range(5_000), rng.randint(1, 600)))
            c = cursor_over(ids)
            pos = 0
            for _ in range(rng.randint(1, 8)):
                x = rng.randint(0, 5_100)
                got = c.f_search(x)
                # a cursor only moves forward: the target is max(x, current)
                pos = max(pos, bisect.bisect_left(ids, x))
                want = ids[pos] if pos < len(ids) else None
                assert got == want
                if got is None:
                    break


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 3_000), min_size=1, max_size=400, unique=True), st.integers(-1, 3_100))
def test_successor_property(ids, x):
    ids.sort()
    want = next((d for d in ids if d > x), None)
    assert cursor_over(ids).successor(x) == want


class TestPersistence:
    def test_round_trip(self, tmp_path):
        idx = make_index(["a b a", "b c"])
        save_index(idx, tmp_path / "i.idx")
        back = load_index(tmp_path / "i.idx")
        assert back == idx
        assert back.avg_dl == 2.5 and back.N == 2
        assert {t: list(pl.entries()) for t, pl in back.lexicon.items()} == {
            t: list(pl.entries()) for t, pl in idx.lexicon.items()
        }

    def test_round_trip_large(self, small_synth, tmp_path):
        idx = small_synth.index
        save_index(idx, tmp_path / "i.idx")
        assert load_index(tmp_path / "i.idx") == idx

    def test_round_trip_empty(self, tmp_path):
        idx = build_index(Collection(docs=(), ordering="corpus_order"))
        save_index(idx, tmp_path / "i.idx")
        back = load_index(tmp_path / "i.idx")
        assert back.N == 0 and back.lexicon == {}

    def test_truncated(self, tmp_path):
        save_index(make_index(["a b a", "b c"]), tmp_path / "i.idx")
        data = (tmp_path / "i.idx").read_bytes()
        (tmp_path / "t.idx").write_bytes(data[:-7])
        with pytest.raises(IndexFileError, match="checksum"):
            load_index(tmp_path / "t.idx")

    def test_corrupted_byte(self, tmp_path):
        save_index(make_index(["a b a", "b c"]), tmp_path / "i.idx")
        data = bytearray((tmp_path / "i.idx").read_bytes())
        data[-3] ^= 0xFF
        (tmp_path / "c.idx").write_bytes(bytes(data))
        with pytest.raises(IndexFileError, match="checksum"):
            load_index(tmp_path / "c.idx")

    def test_version_mismatch(self, tmp_path):
        save_index(make_index(["a"]), tmp_path / "i.idx")
        data = bytearray((tmp_path / "i.idx").read_bytes())
        data[5] = 99
        (tmp_path / "v.idx").write_bytes(bytes(data))
        with pytest.raises(IndexFileError, match="version"):
            load_index(tmp_path / "v.idx")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.idx").write_bytes(b"hello world")
        with pytest.raises(IndexFileError, match="magic"):
            load_index(tmp_path / "x.idx")

    def test_tokenizer_settings_persist(self, tmp_path):
        idx = make_index(["the cat"], stopwords={"the"})
        save_index(idx, tmp_path / "i.idx")
        assert load_index(tmp_path / "i.idx").ingest_config().stopwords == {"the"}
