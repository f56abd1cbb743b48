"""Cluster review artifacts, merge maps, and taxonomy export.

Per cluster: a representative query (member nearest the centroid in the
original embedding space), salient unigram/bigram terms by TF-IDF over
per-cluster documents, and a reproducible random sample of member queries.
A merge map folds clusters into named categories under themes; the result
exports as Markdown, CSV, and a parent-child JSON graph.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass
from importlib import resources
from math import log as ln

import numpy as np

from .errors import (
    EmptyCluster,
    IdfUndefined,
    SizeMismatch,
    UnmappedCluster,
)

log = logging.getLogger(__name__)

_TOKEN = re.compile(r"[a-z0-9]+")
_STOPWORDS: frozenset | None = None


def stopwords() -> frozenset:
    """The packaged English stop list (lazy-loaded)."""
    global _STOPWORDS
    if _STOPWORDS is None:
        text = resources.files("querytax.data").joinpath("stopwords_en.txt").read_text()
        _STOPWORDS = frozenset(
            w for w in text.splitlines() if w and not w.startswith("#")
        )
    return _STOPWORDS


@dataclass
class ClusterSummary:
    cluster_id: int
    size: int
    representative_id: int
    representative_text: str
    top_terms: list[tuple[str, float]]
    sample_ids: list[int]
    sample_texts: list[str]


@dataclass(frozen=True)
class MergeEntry:
    category: str
    theme: str


@dataclass
class MergeMap:
    entries: dict[int, MergeEntry]

    @property
    def themes(self) -> list[str]:
        return sorted({e.theme for e in self.entries.values()})


@dataclass
class CategoryNode:
    name: str
    theme: str
    size: int
    cluster_ids: list[int]
    representative_id: int | None = None
    representative_text: str | None = None


@dataclass
class Taxonomy:
    categories: dict[str, CategoryNode]   # keyed by category name
    noise_size: int
    total: int

    def theme_sizes(self) -> dict[str, int]:
        sizes: dict[str, int] = {}
        for node in self.categories.values():
            sizes[node.theme] = sizes.get(node.theme, 0) + node.size
        return sizes


# --- per-cluster artifacts ------------------------------------------------------

def representative_query(member_embeddings, member_ids, member_texts):
    """Member nearest the arithmetic-mean centroid; ties pick the lowest id."""
    X = np.asarray(member_embeddings, dtype=np.float64)
    ids = np.asarray(member_ids, dtype=np.int64)
    if X.size == 0 or len(ids) == 0:
        raise EmptyCluster("no members")
    centroid = X.mean(axis=0)
    d2 = ((X - centroid) ** 2).sum(axis=1)
    pick = np.lexsort((ids, d2))[0]
    return int(ids[pick]), member_texts[pick]


def tokenize(text: str, stop: frozenset | None = None) -> list[str]:
    """Lowercased alphanumeric tokens with stop words removed."""
    stop = stopwords() if stop is None else stop
    return [t for t in _TOKEN.findall(text.lower()) if t not in stop]


def _ngram_counts(texts, stop) -> dict[str, int]:
    counts: dict[str, int] = {}
    for text in texts:
        toks = tokenize(text, stop)
        for t in toks:
            counts[t] = counts.get(t, 0) + 1
        for i in range(len(toks) - 1):
            bg = toks[i] + " " + toks[i + 1]
            counts[bg] = counts.get(bg, 0) + 1
    return counts


def tfidf_terms(cluster_id, texts_by_cluster, n: int = 20,
                stop: frozenset | None = None) -> list[tuple[str, float]]:
    """Top-n unigrams/bigrams of one cluster by tf * idf.

    Documents are the clusters' concatenated query texts; stop words are
    removed before bigram formation (bigrams never span a query boundary).
    tf is the raw in-cluster count and idf = ln((1+D)/(1+df)) + 1 over the
    D cluster documents. Ties rank alphabetically.
    """
    if len(texts_by_cluster) < 2:
        raise IdfUndefined("tf-idf needs at least two cluster documents")
    if cluster_id not in texts_by_cluster:
        raise EmptyCluster(f"cluster {cluster_id} has no texts")
    stop = stopwords() if stop is None else stop
    counts = {
        cid: _ngram_counts(texts, stop) for cid, texts in texts_by_cluster.items()
    }
    D = len(counts)
    df: dict[str, int] = {}
    for c in counts.values():
        for term in c:
            df[term] = df.get(term, 0) + 1
    target = counts[cluster_id]
    scored = [
        (term, tf * (ln((1 + D) / (1 + df[term])) + 1.0))
        for term, tf in target.items()
    ]
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:n]


def sample_queries(member_ids, n: int = 10, seed=0) -> list[int]:
    """Uniform sample without replacement; the whole cluster when small.

    ``seed`` is anything numpy Generators accept (an int or a sequence).
    """
    ids = list(member_ids)
    if len(ids) <= n:
        return ids
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(ids), size=n, replace=False)
    return [ids[i] for i in pick]


def summarize_clusters(corpus, cluster_of_id: dict[int, int], *, n_terms=20,
                       n_samples=10, seed=0) -> list[ClusterSummary]:
    """One summary per distinct label (noise -1 included), sorted by id.

    Representative queries use the corpus's original embedding space.
    """
    members: dict[int, list[int]] = {}
    for pos, id_ in enumerate(corpus.ids):
        lab = cluster_of_id.get(int(id_))
        if lab is None:
            continue
        members.setdefault(lab, []).append(pos)
    texts_by_cluster = {
        lab: [corpus.queries[p].text for p in pos_list]
        for lab, pos_list in members.items()
    }
    summaries = []
    for lab in sorted(members):
        pos_list = members[lab]
        ids = [int(corpus.ids[p]) for p in pos_list]
        texts = texts_by_cluster[lab]
        rep_id, rep_text = representative_query(
            corpus.matrix[pos_list], ids, texts
        )
        terms = (
            tfidf_terms(lab, texts_by_cluster, n=n_terms)
            if len(texts_by_cluster) >= 2 else []
        )
        # per-cluster stream; lab+1 keeps the noise label (-1) seedable
        sample = sample_queries(ids, n=n_samples, seed=(seed, lab + 1))
        by_id = dict(zip(ids, texts))
        summaries.append(ClusterSummary(
            lab, len(ids), rep_id, rep_text, terms,
            sample, [by_id[i] for i in sample],
        ))
    return summaries


# --- exports ---------------------------------------------------------------------

def export_markdown(summaries) -> str:
    """Review document, one section per cluster, noise first; byte-stable."""
    lines = ["# Cluster review", ""]
    for s in sorted(summaries, key=lambda s: s.cluster_id):
        title = "Noise (-1)" if s.cluster_id == -1 else f"Cluster {s.cluster_id}"
        lines += [
            f"## {title}",
            "",
            f"- Size: {s.size}",
            f"- Representative query: {s.representative_text} (id {s.representative_id})",
            f"- Top terms: {', '.join(t for t, _ in s.top_terms)}",
            "- Samples:",
        ]
        lines += [f"  - {text} (id {i})" for i, text in zip(s.sample_ids, s.sample_texts)]
        lines.append("")
    return "\n".join(lines)


def summaries_to_json(summaries) -> str:
    return json.dumps(
        [
            {
                "cluster_id": s.cluster_id,
                "size": s.size,
                "representative_id": s.representative_id,
                "representative_text": s.representative_text,
                "top_terms": [[t, score] for t, score in s.top_terms],
                "sample_ids": s.sample_ids,
                "sample_texts": s.sample_texts,
            }
            for s in sorted(summaries, key=lambda s: s.cluster_id)
        ],
        indent=2,
    )


def summaries_from_json(text: str) -> list[ClusterSummary]:
    return [
        ClusterSummary(
            d["cluster_id"], d["size"], d["representative_id"],
            d["representative_text"],
            [(t, float(score)) for t, score in d["top_terms"]],
            list(d["sample_ids"]), list(d["sample_texts"]),
        )
        for d in json.loads(text)
    ]


def export_csv(summaries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["cluster_id", "size", "representative_id", "representative_query",
             "top_terms", "sample_ids", "sample_queries"]
        )
        for s in sorted(summaries, key=lambda s: s.cluster_id):
            writer.writerow([
                s.cluster_id, s.size, s.representative_id, s.representative_text,
                "; ".join(t for t, _ in s.top_terms),
                "; ".join(str(i) for i in s.sample_ids),
                " | ".join(s.sample_texts),
            ])


# --- merging and taxonomy -----------------------------------------------------------

def load_merge_map(path) -> MergeMap:
    """TSV ``cluster_id\\tcategory\\ttheme``, one row per cluster."""
    from .errors import ParseError

    entries: dict[int, MergeEntry] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n")
        if header != "cluster_id\tcategory\ttheme":
            raise ParseError(1, "expected header 'cluster_id\\tcategory\\ttheme'")
        for n, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(n, "expected 3 fields")
            entries[int(parts[0])] = MergeEntry(parts[1], parts[2])
    return MergeMap(entries)


def identity_merge_map(cluster_ids, theme: str = "unthemed") -> MergeMap:
    return MergeMap({
        int(c): MergeEntry(f"cluster_{int(c)}", theme)
        for c in cluster_ids if int(c) != -1
    })


def apply_merge(cluster_of_id: dict[int, int], merge_map: MergeMap):
    """Fold clusters into categories. Every non-noise cluster must be mapped.

    Returns (category_of_id, category_sizes, category_clusters); noise ids
    keep None as their category.
    """
    present = sorted({c for c in cluster_of_id.values() if c != -1})
    for c in present:
        if c not in merge_map.entries:
            raise UnmappedCluster(c)
    category_of_id: dict[int, str | None] = {}
    sizes: dict[str, int] = {}
    clusters: dict[str, set[int]] = {}
    for id_, c in cluster_of_id.items():
        if c == -1:
            category_of_id[id_] = None
            continue
        cat = merge_map.entries[c].category
        category_of_id[id_] = cat
        sizes[cat] = sizes.get(cat, 0) + 1
        clusters.setdefault(cat, set()).add(c)
    return category_of_id, sizes, {k: sorted(v) for k, v in clusters.items()}


def build_taxonomy(cluster_of_id: dict[int, int], merge_map: MergeMap,
                   summaries=None) -> Taxonomy:
    """Assemble the theme -> category tree plus a separate noise bucket.

    A category's representative query comes from its largest member cluster
    (ties toward the lower cluster id) when summaries are supplied.
    """
    _, sizes, clusters = apply_merge(cluster_of_id, merge_map)
    noise = sum(1 for c in cluster_of_id.values() if c == -1)
    by_cluster = {s.cluster_id: s for s in summaries or []}
    categories: dict[str, CategoryNode] = {}
    for cat, cluster_ids in clusters.items():
        theme = merge_map.entries[cluster_ids[0]].theme
        node = CategoryNode(cat, theme, sizes[cat], cluster_ids)
        candidates = [by_cluster[c] for c in cluster_ids if c in by_cluster]
        if candidates:
            best = max(candidates, key=lambda s: (s.size, -s.cluster_id))
            node.representative_id = best.representative_id
            node.representative_text = best.representative_text
        categories[cat] = node
    return Taxonomy(categories, noise, len(cluster_of_id))


def theme_shares(taxonomy: Taxonomy) -> dict[str, float]:
    """Percent of ALL queries (noise included) per theme, plus 'noise'."""
    sizes = taxonomy.theme_sizes()
    accounted = sum(sizes.values()) + taxonomy.noise_size
    if accounted != taxonomy.total:
        raise SizeMismatch(
            f"category sizes + noise = {accounted}, total = {taxonomy.total}"
        )
    if taxonomy.total == 0:
        raise SizeMismatch("empty taxonomy total")
    shares = {
        theme: 100.0 * size / taxonomy.total for theme, size in sizes.items()
    }
    shares["noise"] = 100.0 * taxonomy.noise_size / taxonomy.total
    return shares


def export_taxonomy_json(taxonomy: Taxonomy) -> str:
    """Parent-child graph: root -> themes -> categories (noise not graphed)."""
    themes: dict[str, list[CategoryNode]] = {}
    for node in taxonomy.categories.values():
        themes.setdefault(node.theme, []).append(node)
    children = []
    for theme in sorted(themes):
        cats = sorted(themes[theme], key=lambda n: n.name)
        children.append({
            "name": theme,
            "children": [
                {
                    "name": n.name,
                    "size": n.size,
                    "cluster_ids": n.cluster_ids,
                    "representative_query": n.representative_text,
                    "representative_query_id": n.representative_id,
                }
                for n in cats
            ],
        })
    return json.dumps({"name": "root", "children": children}, indent=2)
