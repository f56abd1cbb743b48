import json
from math import log

import numpy as np
import pytest

from conftest import toy_corpus
from querytax.errors import (
    EmptyCluster,
    IdfUndefined,
    SizeMismatch,
    UnmappedCluster,
)
from querytax.interpret import (
    MergeEntry,
    MergeMap,
    apply_merge,
    build_taxonomy,
    export_csv,
    export_markdown,
    export_taxonomy_json,
    identity_merge_map,
    load_merge_map,
    representative_query,
    sample_queries,
    stopwords,
    summarize_clusters,
    theme_shares,
    tfidf_terms,
    tokenize,
)


class TestRepresentativeQuery:
    def test_singleton(self):
        rid, text = representative_query(np.array([[1.0, 2.0]]), [44], ["only query"])
        assert rid == 44 and text == "only query"

    def test_matches_exhaustive_scan(self, rng):
        X = rng.standard_normal((5, 3))
        ids = [10, 11, 12, 13, 14]
        texts = [f"t{i}" for i in ids]
        rid, _ = representative_query(X, ids, texts)
        centroid = X.mean(axis=0)
        best = ids[int(np.argmin(((X - centroid) ** 2).sum(axis=1)))]
        assert rid == best

    def test_tie_lowest_id(self):
        X = np.array([[1.0], [-1.0]])  # centroid 0, both 1 away
        rid, _ = representative_query(X, [9, 4], ["a", "b"])
        assert rid == 4

    def test_empty(self):
        with pytest.raises(EmptyCluster):
            representative_query(np.empty((0, 2)), [], [])


class TestTfidfTerms:
    def test_stopwords_loaded(self):
        stop = stopwords()
        assert "the" in stop and "is" in stop
        assert "pisa" not in stop

    def test_tokenize(self):
        assert tokenize("What IS the leaning-tower, of Pisa?") == [
            "leaning",
            "tower",
            "pisa",
        ]

    def test_disjoint_vocabularies(self):
        texts = {
            0: ["alpha bravo", "bravo charlie"],
            1: ["delta echo", "echo foxtrot"],
        }
        for cid, vocab in ((0, {"alpha", "bravo", "charlie"}),
                           (1, {"delta", "echo", "foxtrot"})):
            terms = tfidf_terms(cid, texts)
            for term, _ in terms:
                assert set(term.split()) <= vocab

    def test_hand_computed_scores(self):
        texts = {
            0: ["tower pisa", "tower tall"],
            1: ["river long"],
            2: ["tower river"],
        }
        terms = dict(tfidf_terms(0, texts, n=50))
        D = 3
        idf = lambda df: log((1 + D) / (1 + df)) + 1
        assert terms["tower"] == pytest.approx(2 * idf(2), abs=1e-12)
        assert terms["pisa"] == pytest.approx(1 * idf(1), abs=1e-12)
        assert terms["tower pisa"] == pytest.approx(1 * idf(1), abs=1e-12)
        assert terms["tall"] == pytest.approx(1 * idf(1), abs=1e-12)
        assert "river" not in terms

    def test_landmark_cluster_surfaces_theme_terms(self):
        tower_queries = [
            "leaning tower of pisa facts",
            "how tall is the leaning tower of pisa",
            "what is the tallest building in the world",
            "tower of pisa location",
            "how many floors in the empire state building",
        ]
        county_queries = [
            "what county is atlantic beach fl in",
            "where is dunedin florida",
            "what county is harbor springs in",
        ]
        terms = [t for t, _ in tfidf_terms(0, {0: tower_queries, 1: county_queries})]
        assert "tower" in terms[:5]
        assert "pisa" in terms[:5]
        assert "leaning tower" in terms
        assert not any("florida" in t for t in terms)

    def test_order_invariant_within_cluster(self, rng):
        texts = ["alpha beta", "gamma delta", "beta gamma"]
        other = ["epsilon zeta"]
        a = tfidf_terms(0, {0: texts, 1: other})
        b = tfidf_terms(0, {0: texts[::-1], 1: other})
        assert a == b

    def test_single_cluster_undefined(self):
        with pytest.raises(IdfUndefined):
            tfidf_terms(0, {0: ["just one"]})

    def test_tie_alphabetical(self):
        texts = {0: ["zebra apple"], 1: ["other words"]}
        terms = tfidf_terms(0, texts)
        names = [t for t, _ in terms]
        assert names.index("apple") < names.index("zebra")


class TestSampleQueries:
    def test_small_cluster_returned_whole(self):
        assert sample_queries([1, 2, 3, 4], n=10, seed=0) == [1, 2, 3, 4]

    def test_deterministic(self):
        ids = list(range(100))
        assert sample_queries(ids, 10, seed=5) == sample_queries(ids, 10, seed=5)

    def test_without_replacement(self):
        got = sample_queries(list(range(20)), 10, seed=3)
        assert len(set(got)) == 10

    def test_uniform_over_seeds(self):
        ids = [0, 1, 2, 3, 4]
        counts = {i: 0 for i in ids}
        for seed in range(10_000):
            for i in sample_queries(ids, 2, seed=seed):
                counts[i] += 1
        for i in ids:
            assert counts[i] == pytest.approx(4000, abs=150)


class TestSummaries:
    def _corpus(self):
        texts = [
            "what county is miami fl",
            "what county is tampa fl",
            "where is orlando florida",
            "tallest tower in the world",
            "leaning tower of pisa",
            "how tall is a tower",
            "noise entry one",
        ]
        return toy_corpus(n=7, d=4, seed=1, texts=texts)

    def test_summaries_cover_labels(self):
        corpus = self._corpus()
        labels = {0: 0, 1: 0, 2: 0, 3: 1, 4: 1, 5: 1, 6: -1}
        summaries = summarize_clusters(corpus, labels, n_samples=2, seed=0)
        assert [s.cluster_id for s in summaries] == [-1, 0, 1]
        by_id = {s.cluster_id: s for s in summaries}
        assert by_id[0].size == 3
        assert by_id[0].representative_id in (0, 1, 2)
        assert all(i in (3, 4, 5) for i in by_id[1].sample_ids)

    def test_markdown_stable_and_ordered(self):
        corpus = self._corpus()
        labels = {i: (0 if i < 3 else 1) for i in range(6)}
        labels[6] = -1
        summaries = summarize_clusters(corpus, labels, seed=0)
        doc1 = export_markdown(summaries)
        doc2 = export_markdown(summarize_clusters(corpus, labels, seed=0))
        assert doc1 == doc2
        assert doc1.index("Noise (-1)") < doc1.index("Cluster 0") < doc1.index("Cluster 1")

    def test_markdown_empty(self):
        assert export_markdown([]) == "# Cluster review\n"

    def test_csv_export(self, tmp_path):
        corpus = self._corpus()
        labels = {i: 0 if i < 3 else 1 for i in range(7)}
        summaries = summarize_clusters(corpus, labels, seed=0)
        p = tmp_path / "review.csv"
        export_csv(summaries, p)
        lines = p.read_text().splitlines()
        assert lines[0].startswith("cluster_id,size,representative_id")
        assert len(lines) == 3

    def test_seed_zero_with_large_noise_bucket(self):
        # noise label -1 must not break seed derivation at seed 0
        corpus = toy_corpus(n=30, d=3, seed=4)
        labels = {i: (-1 if i < 20 else i % 2) for i in range(30)}
        summaries = summarize_clusters(corpus, labels, n_samples=5, seed=0)
        noise = next(s for s in summaries if s.cluster_id == -1)
        assert len(noise.sample_ids) == 5
        again = summarize_clusters(corpus, labels, n_samples=5, seed=0)
        assert [s.sample_ids for s in summaries] == [s.sample_ids for s in again]


class TestMerge:
    def test_identity_map_sizes(self):
        labels = {i: i % 3 for i in range(9)}
        mm = identity_merge_map(set(labels.values()))
        _, sizes, clusters = apply_merge(labels, mm)
        assert all(v == 3 for v in sizes.values())
        assert len(clusters) == 3

    def test_merging_sums_sizes(self):
        # eighteen county-flavoured clusters folding into one category
        labels = {}
        qid = 0
        for cid in range(18):
            for _ in range(cid + 1):
                labels[qid] = cid
                qid += 1
        mm = MergeMap({c: MergeEntry("US places", "Administrative") for c in range(18)})
        _, sizes, clusters = apply_merge(labels, mm)
        assert sizes == {"US places": sum(range(1, 19))}
        assert clusters["US places"] == list(range(18))

    def test_unmapped_cluster(self):
        labels = {0: 0, 1: 1, 2: 3}
        mm = MergeMap({0: MergeEntry("a", "t"), 1: MergeEntry("b", "t")})
        with pytest.raises(UnmappedCluster) as exc:
            apply_merge(labels, mm)
        assert exc.value.cluster_id == 3

    def test_noise_stays_noise(self):
        labels = {0: -1, 1: 0}
        mm = MergeMap({0: MergeEntry("a", "t")})
        category_of_id, sizes, _ = apply_merge(labels, mm)
        assert category_of_id[0] is None
        assert sizes == {"a": 1}

    def test_merge_map_tsv(self, tmp_path):
        p = tmp_path / "merge.tsv"
        p.write_text("cluster_id\tcategory\ttheme\n0\tZIP codes\tAdministrative\n")
        mm = load_merge_map(p)
        assert mm.entries[0] == MergeEntry("ZIP codes", "Administrative")


class TestTaxonomy:
    def _taxonomy(self, noise=2):
        labels = {}
        qid = 0
        for cid, size in ((0, 3), (1, 2), (2, 5)):
            for _ in range(size):
                labels[qid] = cid
                qid += 1
        for _ in range(noise):
            labels[qid] = -1
            qid += 1
        mm = MergeMap({
            0: MergeEntry("cat a", "theme x"),
            1: MergeEntry("cat a", "theme x"),
            2: MergeEntry("cat b", "theme y"),
        })
        return build_taxonomy(labels, mm), labels

    def test_sizes_sum_to_total(self):
        tax, labels = self._taxonomy()
        assert sum(n.size for n in tax.categories.values()) + tax.noise_size == len(labels)

    def test_theme_shares(self):
        tax, _ = self._taxonomy(noise=2)
        shares = theme_shares(tax)
        assert shares["theme x"] == pytest.approx(100 * 5 / 12)
        assert shares["theme y"] == pytest.approx(100 * 5 / 12)
        assert shares["noise"] == pytest.approx(100 * 2 / 12)
        assert sum(shares.values()) == pytest.approx(100.0)

    def test_theme_shares_no_noise(self):
        tax, _ = self._taxonomy(noise=0)
        shares = theme_shares(tax)
        assert shares["noise"] == 0.0
        assert shares["theme x"] + shares["theme y"] == pytest.approx(100.0)

    def test_share_arithmetic_reference_scale(self):
        # a category of 27,761 out of 181,827 queries is a 15.3% share
        labels = {}
        qid = 0
        for _ in range(27_761):
            labels[qid] = 0
            qid += 1
        while qid < 181_827:
            labels[qid] = -1
            qid += 1
        mm = MergeMap({0: MergeEntry("Costs, prices & taxes", "Statistical")})
        tax = build_taxonomy(labels, mm)
        assert theme_shares(tax)["Statistical"] == pytest.approx(15.3, abs=0.05)

    def test_size_mismatch_detected(self):
        tax, _ = self._taxonomy()
        tax.total += 1
        with pytest.raises(SizeMismatch):
            theme_shares(tax)

    def test_json_schema(self):
        tax, _ = self._taxonomy()
        doc = json.loads(export_taxonomy_json(tax))
        assert doc["name"] == "root"
        themes = {t["name"] for t in doc["children"]}
        assert themes == {"theme x", "theme y"}
        cat = doc["children"][0]["children"][0]
        assert set(cat) == {
            "name", "size", "cluster_ids", "representative_query",
            "representative_query_id",
        }

    def test_json_empty(self):
        tax = build_taxonomy({0: -1}, MergeMap({}))
        assert json.loads(export_taxonomy_json(tax)) == {"name": "root", "children": []}

    def test_json_roundtrip_structural(self):
        tax, _ = self._taxonomy()
        a = export_taxonomy_json(tax)
        b = export_taxonomy_json(tax)
        assert json.loads(a) == json.loads(b)

    def test_category_representative_from_largest_cluster(self):
        corpus = toy_corpus(n=6, d=3, seed=2)
        labels = {0: 0, 1: 0, 2: 0, 3: 1, 4: 1, 5: -1}
        summaries = summarize_clusters(corpus, labels, seed=0)
        mm = MergeMap({
            0: MergeEntry("cat", "theme"),
            1: MergeEntry("cat", "theme"),
        })
        tax = build_taxonomy(labels, mm, summaries)
        big = next(s for s in summaries if s.cluster_id == 0)
        assert tax.categories["cat"].representative_id == big.representative_id
