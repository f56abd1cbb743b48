import numpy as np
import pytest

from querytax.corpus import (
    AlignedCorpus,
    EmbeddingSet,
    FirstWordStats,
    LabelRecord,
    QueryRecord,
    align,
    first_word,
    first_word_stats,
    load_embeddings,
    load_labels,
    load_queries,
    save_embeddings,
    save_labels,
    save_queries,
)
from querytax.errors import (
    DuplicateId,
    EmptyText,
    FormatError,
    NonFiniteValue,
    NoOverlap,
    ParseError,
    TruncatedFile,
)


def write(tmp_path, name, content):
    p = tmp_path / name
    p.write_text(content, encoding="utf-8")
    return p


class TestLoadQueries:
    def test_single_row(self, tmp_path):
        p = write(tmp_path, "q.tsv", "id\ttext\n602750\twhat county is badger mn in?\n")
        records = load_queries(p)
        assert records == [QueryRecord(602750, "what county is badger mn in?")]

    def test_empty_file(self, tmp_path):
        p = write(tmp_path, "q.tsv", "")
        assert load_queries(p) == []

    def test_header_only(self, tmp_path):
        p = write(tmp_path, "q.tsv", "id\ttext\n")
        assert load_queries(p) == []

    def test_duplicate_id(self, tmp_path):
        p = write(tmp_path, "q.tsv", "id\ttext\n7\tfoo\n7\tbar\n")
        with pytest.raises(DuplicateId) as exc:
            load_queries(p)
        assert exc.value.id == 7

    def test_empty_text(self, tmp_path):
        p = write(tmp_path, "q.tsv", "id\ttext\n1\tok\n2\t   \n")
        with pytest.raises(EmptyText) as exc:
            load_queries(p)
        assert exc.value.line == 3

    def test_malformed_row(self, tmp_path):
        p = write(tmp_path, "q.tsv", "id\ttext\n1\ta\tb\n")
        with pytest.raises(ParseError) as exc:
            load_queries(p)
        assert exc.value.line == 2

    def test_non_integer_id(self, tmp_path):
        p = write(tmp_path, "q.tsv", "id\ttext\nxyz\tfoo\n")
        with pytest.raises(ParseError):
            load_queries(p)

    def test_bad_header(self, tmp_path):
        p = write(tmp_path, "q.tsv", "text\tid\n1\tfoo\n")
        with pytest.raises(ParseError) as exc:
            load_queries(p)
        assert exc.value.line == 1

    def test_order_preserved_and_roundtrip(self, tmp_path):
        records = [QueryRecord(5, "five"), QueryRecord(1, "one"), QueryRecord(9, "nine")]
        p = tmp_path / "q.tsv"
        save_queries(records, p)
        assert load_queries(p) == records

    def test_text_not_lowercased(self, tmp_path):
        p = write(tmp_path, "q.tsv", "id\ttext\n1\tWhere IS Paris\n")
        assert load_queries(p)[0].text == "Where IS Paris"


class TestEmbeddingsIO:
    def test_shape(self, tmp_path):
        es = EmbeddingSet(np.arange(3), np.ones((3, 4), dtype=np.float32))
        p = tmp_path / "e.qemb"
        save_embeddings(es, p)
        loaded = load_embeddings(p)
        assert loaded.matrix.shape == (3, 4)
        assert loaded.ids.tolist() == [0, 1, 2]

    def test_roundtrip_byte_identical(self, tmp_path, rng):
        es = EmbeddingSet(
            np.array([10, 3, 99]), rng.standard_normal((3, 7)).astype(np.float32)
        )
        p1, p2 = tmp_path / "a.qemb", tmp_path / "b.qemb"
        save_embeddings(es, p1)
        save_embeddings(load_embeddings(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "e.qemb"
        p.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(FormatError):
            load_embeddings(p)

    def test_truncated_midrow(self, tmp_path, rng):
        es = EmbeddingSet(np.arange(3), rng.standard_normal((3, 4)).astype(np.float32))
        p = tmp_path / "e.qemb"
        save_embeddings(es, p)
        data = p.read_bytes()
        p.write_bytes(data[: len(data) - 6])
        with pytest.raises(TruncatedFile):
            load_embeddings(p)

    def test_trailing_bytes(self, tmp_path, rng):
        es = EmbeddingSet(np.arange(2), rng.standard_normal((2, 3)).astype(np.float32))
        p = tmp_path / "e.qemb"
        save_embeddings(es, p)
        p.write_bytes(p.read_bytes() + b"xx")
        with pytest.raises(FormatError):
            load_embeddings(p)

    def test_nan_payload(self, tmp_path, rng):
        m = rng.standard_normal((3, 4)).astype(np.float32)
        es = EmbeddingSet(np.arange(3), m)
        p = tmp_path / "e.qemb"
        save_embeddings(es, p)
        data = bytearray(p.read_bytes())
        # poison one float of row 1
        off = 20 + 3 * 8 + 4 * 4
        data[off : off + 4] = np.array([np.nan], dtype="<f4").tobytes()
        p.write_bytes(bytes(data))
        with pytest.raises(NonFiniteValue) as exc:
            load_embeddings(p)
        assert exc.value.row == 1

    def test_wrong_version(self, tmp_path, rng):
        es = EmbeddingSet(np.arange(2), rng.standard_normal((2, 3)).astype(np.float32))
        p = tmp_path / "e.qemb"
        save_embeddings(es, p)
        data = bytearray(p.read_bytes())
        data[4] = 9
        p.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_embeddings(p)

    def test_duplicate_embedding_ids(self):
        with pytest.raises(DuplicateId):
            EmbeddingSet(np.array([1, 1]), np.zeros((2, 2), dtype=np.float32))


class TestAlign:
    def _queries(self, ids):
        return [QueryRecord(i, f"q{i}") for i in ids]

    def _emb(self, ids, d=3):
        rng = np.random.default_rng(0)
        return EmbeddingSet(
            np.asarray(ids), rng.standard_normal((len(ids), d)).astype(np.float32)
        )

    def test_full_overlap(self):
        corpus = align(self._queries([1, 2, 3]), self._emb([3, 1, 2]))
        assert len(corpus) == 3
        assert corpus.dropped == 0
        assert corpus.ids.tolist() == [1, 2, 3]  # query-file order

    def test_partial_overlap(self):
        corpus = align(self._queries([1, 2, 3]), self._emb([1, 3]))
        assert len(corpus) == 2
        assert corpus.dropped == 1
        assert corpus.ids.tolist() == [1, 3]

    def test_disjoint(self):
        with pytest.raises(NoOverlap):
            align(self._queries([1, 2]), self._emb([3, 4]))

    def test_positional_alignment(self):
        emb = self._emb([3, 1, 2])
        corpus = align(self._queries([2, 3]), emb)
        np.testing.assert_array_equal(corpus.matrix[0], emb.matrix[2])
        np.testing.assert_array_equal(corpus.matrix[1], emb.matrix[0])

    def test_idempotent(self):
        corpus = align(self._queries([1, 2, 3, 4]), self._emb([2, 4, 1]))
        again = align(corpus.queries, corpus.embeddings, corpus.labels)
        assert again.dropped == 0
        assert [q.id for q in again.queries] == [q.id for q in corpus.queries]
        np.testing.assert_array_equal(again.matrix, corpus.matrix)

    def test_labels_filtered(self):
        labels = {
            1: LabelRecord(1, "geospatial", "gold"),
            9: LabelRecord(9, "geospatial", "gold"),
        }
        corpus = align(self._queries([1, 2]), self._emb([1, 2]), labels)
        assert set(corpus.labels) == {1}


class TestLabelsIO:
    def test_roundtrip(self, tmp_path):
        labels = [
            LabelRecord(1, "geospatial", "weak", 4),
            LabelRecord(2, "non_geospatial", "gold"),
            LabelRecord(3, "geospatial", "predicted"),
        ]
        p = tmp_path / "l.tsv"
        save_labels(labels, p)
        loaded = load_labels(p)
        assert loaded == {r.id: r for r in labels}

    def test_votes_iff_weak(self):
        with pytest.raises(ParseError):
            LabelRecord(1, "geospatial", "gold", 3)
        with pytest.raises(ParseError):
            LabelRecord(1, "geospatial", "weak", None)
        with pytest.raises(ParseError):
            LabelRecord(1, "geospatial", "weak", 6)

    def test_unknown_label(self):
        with pytest.raises(ParseError):
            LabelRecord(1, "spatial", "gold")


def _labelled_corpus(texts_by_class):
    queries = []
    labels = {}
    i = 0
    for cls, texts in texts_by_class.items():
        for t in texts:
            queries.append(QueryRecord(i, t))
            labels[i] = LabelRecord(i, cls, "gold")
            i += 1
    emb = EmbeddingSet(
        np.arange(len(queries)), np.zeros((len(queries), 2), dtype=np.float32)
    )
    return AlignedCorpus(queries, emb, labels)


class TestFirstWords:
    def test_first_word_normalisation(self):
        assert first_word("Where is x") == "where"
        assert first_word("  'where'  is") == "where"
        assert first_word("what's the time") == "what's"
        assert first_word("???") == ""
        assert first_word("") == ""

    def test_single_query(self):
        corpus = _labelled_corpus({"geospatial": ["where is x"]})
        stats = first_word_stats(corpus)
        assert stats.per_class["geospatial"] == [("where", 100.0)]

    def test_hand_count(self):
        corpus = _labelled_corpus(
            {"geospatial": ["what a", "what b", "where c", "how d"]}
        )
        stats = first_word_stats(corpus)
        assert stats.per_class["geospatial"] == [
            ("what", 50.0),
            ("how", 25.0),
            ("where", 25.0),
        ]

    def test_reference_first_word_shares(self):
        # 1000 geospatial queries engineered so 'what' leads at 29.6% and
        # 'where' is second at 15.8%
        texts = (
            ["what q"] * 296
            + ["where q"] * 158
            + ["how q"] * 116
            + [f"w{i} q" for i in range(430)]
        )
        corpus = _labelled_corpus({"geospatial": texts})
        rows = first_word_stats(corpus).per_class["geospatial"]
        assert rows[0] == ("what", pytest.approx(29.6))
        assert rows[1] == ("where", pytest.approx(15.8))

    def test_percents_sum_to_100_when_fully_labelled(self):
        corpus = _labelled_corpus(
            {
                "geospatial": ["a x", "b y", "c z"],
                "non_geospatial": ["d", "e", "f", "g"],
            }
        )
        stats = first_word_stats(corpus)
        for cls in ("geospatial", "non_geospatial"):
            assert sum(p for _, p in stats.per_class[cls]) == pytest.approx(
                100.0, abs=1e-9
            )

    def test_unlabelled_skipped_and_counted(self):
        corpus = _labelled_corpus({"geospatial": ["what a"]})
        corpus.queries.append(QueryRecord(99, "unlabelled"))
        stats = first_word_stats(corpus)
        assert stats.skipped == 1

    def test_sum_below_100_with_empty_first_word(self):
        corpus = _labelled_corpus({"geospatial": ["what a", "??? b"]})
        stats = first_word_stats(corpus)
        assert sum(p for _, p in stats.per_class["geospatial"]) == pytest.approx(50.0)
