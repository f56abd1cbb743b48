"""Corpus ingestion: query texts, embedding matrices, label files.

File formats
------------
queries   UTF-8 TSV with header ``id\\ttext``; tabs inside text are forbidden.
``.qemb`` binary embeddings: magic ``QEMB``, u32 LE version (=1), u64 LE n,
          u32 LE d, then n u64 LE ids and n*d f32 LE row-major values.
labels    TSV ``id\\tlabel\\tsource\\tvotes``; votes blank unless source=weak.
"""

from __future__ import annotations

import logging
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateId,
    EmptyText,
    FormatError,
    NonFiniteValue,
    NoOverlap,
    ParseError,
    TruncatedFile,
)

log = logging.getLogger(__name__)

QEMB_MAGIC = b"QEMB"
QEMB_VERSION = 1

GEOSPATIAL = "geospatial"
NON_GEOSPATIAL = "non_geospatial"
LABELS = (GEOSPATIAL, NON_GEOSPATIAL)
SOURCES = ("weak", "gold", "predicted")

_EDGE_PUNCT = re.compile(r"^[^\w]+|[^\w]+$")


@dataclass(frozen=True)
class QueryRecord:
    id: int
    text: str


@dataclass
class EmbeddingSet:
    """Ordered ids plus one float32 embedding row per id."""

    ids: np.ndarray      # (n,) int64
    matrix: np.ndarray   # (n, d) float32

    def __post_init__(self):
        self.ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2:
            raise FormatError("embedding matrix must be 2-d")
        if len(self.ids) != self.matrix.shape[0]:
            raise FormatError("id count does not match matrix rows")
        if len(np.unique(self.ids)) != len(self.ids):
            dup = int(_first_duplicate(self.ids))
            raise DuplicateId(dup)
        bad = ~np.isfinite(self.matrix).all(axis=1)
        if bad.any():
            raise NonFiniteValue(int(np.flatnonzero(bad)[0]))

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class LabelRecord:
    id: int
    label: str
    source: str
    votes: int | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise ParseError(0, f"unknown label {self.label!r}")
        if self.source not in SOURCES:
            raise ParseError(0, f"unknown source {self.source!r}")
        if (self.votes is not None) != (self.source == "weak"):
            raise ParseError(0, "votes present iff source is weak")
        if self.votes is not None and not 0 <= self.votes <= 5:
            raise ParseError(0, f"votes {self.votes} outside [0, 5]")


@dataclass
class AlignedCorpus:
    """Queries and embeddings restricted to their common ids, positionally aligned."""

    queries: list[QueryRecord]
    embeddings: EmbeddingSet
    labels: dict[int, LabelRecord] | None = None
    dropped: int = 0

    def __len__(self):
        return len(self.queries)

    @property
    def ids(self) -> np.ndarray:
        return self.embeddings.ids

    @property
    def matrix(self) -> np.ndarray:
        return self.embeddings.matrix

    def text_of(self, id_: int) -> str:
        if not hasattr(self, "_text_index"):
            self._text_index = {q.id: q.text for q in self.queries}
        return self._text_index[id_]


def _first_duplicate(values) -> int:
    seen = set()
    for v in values:
        v = int(v)
        if v in seen:
            return v
        seen.add(v)
    raise ValueError("no duplicate present")


# --- queries ----------------------------------------------------------------

def load_queries(path) -> list[QueryRecord]:
    """Read a queries TSV (header ``id\\ttext``). Order is preserved.

    Raises DuplicateId, EmptyText or ParseError with the offending 1-based
    line number. A zero-byte file yields an empty list.
    """
    raw = Path(path).read_text(encoding="utf-8")
    if raw == "":
        return []
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if lines[0].rstrip("\r") != "id\ttext":
        raise ParseError(1, "expected header 'id\\ttext'")
    records: list[QueryRecord] = []
    seen: set[int] = set()
    for n, line in enumerate(lines[1:], start=2):
        line = line.rstrip("\r")
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(n, f"expected 2 tab-separated fields, got {len(parts)}")
        try:
            id_ = int(parts[0])
        except ValueError:
            raise ParseError(n, f"non-integer id {parts[0]!r}") from None
        if id_ < 0:
            raise ParseError(n, f"negative id {id_}")
        if id_ in seen:
            raise DuplicateId(id_)
        text = parts[1]
        if not text.strip():
            raise EmptyText(n)
        seen.add(id_)
        records.append(QueryRecord(id_, text))
    return records


def save_queries(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id\ttext\n")
        for r in records:
            if "\t" in r.text or "\n" in r.text:
                raise ParseError(0, f"tab or newline inside text of id {r.id}")
            fh.write(f"{r.id}\t{r.text}\n")


# --- embeddings ---------------------------------------------------------------

def load_embeddings(path) -> EmbeddingSet:
    """Read a ``.qemb`` file, validating magic, version, lengths and finiteness."""
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != QEMB_MAGIC:
        raise FormatError(f"{path}: bad magic")
    if len(data) < 20:
        raise TruncatedFile(f"{path}: header incomplete")
    version, = struct.unpack_from("<I", data, 4)
    if version != QEMB_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    n, = struct.unpack_from("<Q", data, 8)
    d, = struct.unpack_from("<I", data, 16)
    if d == 0:
        raise FormatError(f"{path}: zero embedding dimension")
    expected = 20 + n * 8 + n * d * 4
    if len(data) < expected:
        raise TruncatedFile(f"{path}: {len(data)} bytes, header claims {expected}")
    if len(data) > expected:
        raise FormatError(f"{path}: {len(data) - expected} trailing bytes")
    ids = np.frombuffer(data, dtype="<u8", count=n, offset=20)
    if (ids >> 63).any():
        raise FormatError(f"{path}: id exceeds signed 64-bit range")
    matrix = np.frombuffer(data, dtype="<f4", count=n * d, offset=20 + n * 8)
    matrix = matrix.reshape(n, d)
    bad = ~np.isfinite(matrix).all(axis=1)
    if bad.any():
        raise NonFiniteValue(int(np.flatnonzero(bad)[0]))
    return EmbeddingSet(ids.astype(np.int64), matrix.copy())


def save_embeddings(embeddings: EmbeddingSet, path) -> None:
    """Write a ``.qemb`` file. ``load_embeddings(save(...))`` is byte-identical."""
    n, d = embeddings.matrix.shape
    with open(path, "wb") as fh:
        fh.write(QEMB_MAGIC)
        fh.write(struct.pack("<I", QEMB_VERSION))
        fh.write(struct.pack("<Q", n))
        fh.write(struct.pack("<I", d))
        fh.write(embeddings.ids.astype("<u8").tobytes())
        fh.write(np.ascontiguousarray(embeddings.matrix, dtype="<f4").tobytes())


# --- labels -------------------------------------------------------------------

def load_labels(path) -> dict[int, LabelRecord]:
    """Read a labels TSV ``id\\tlabel\\tsource\\tvotes`` into an id-keyed map."""
    out: dict[int, LabelRecord] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n")
        if header != "id\tlabel\tsource\tvotes":
            raise ParseError(1, "expected header 'id\\tlabel\\tsource\\tvotes'")
        for n, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(n, f"expected 4 fields, got {len(parts)}")
            try:
                id_ = int(parts[0])
                votes = int(parts[3]) if parts[3] != "" else None
                rec = LabelRecord(id_, parts[1], parts[2], votes)
            except ParseError as e:
                raise ParseError(n, str(e)) from None
            except ValueError:
                raise ParseError(n, f"bad integer in {line!r}") from None
            if id_ in out:
                raise DuplicateId(id_)
            out[id_] = rec
    return out


def save_labels(labels, path) -> None:
    records = labels.values() if isinstance(labels, dict) else labels
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id\tlabel\tsource\tvotes\n")
        for r in records:
            votes = "" if r.votes is None else str(r.votes)
            fh.write(f"{r.id}\t{r.label}\t{r.source}\t{votes}\n")


# --- alignment ------------------------------------------------------------------

def align(queries, embeddings: EmbeddingSet, labels=None) -> AlignedCorpus:
    """Keep only ids present in both inputs, in query-file order.

    Ids found on one side only are dropped (counted and logged, not fatal).
    Raises NoOverlap when the id sets are disjoint.
    """
    emb_index = {int(id_): i for i, id_ in enumerate(embeddings.ids)}
    kept = [q for q in queries if q.id in emb_index]
    if not kept:
        raise NoOverlap("no id occurs in both queries and embeddings")
    rows = np.array([emb_index[q.id] for q in kept], dtype=np.int64)
    aligned = EmbeddingSet(
        embeddings.ids[rows].copy(), embeddings.matrix[rows].copy()
    )
    dropped = (len(queries) - len(kept)) + (len(embeddings) - len(kept))
    if dropped:
        log.warning("align dropped %d unmatched id(s)", dropped)
    kept_labels = None
    if labels is not None:
        kept_ids = {q.id for q in kept}
        kept_labels = {i: rec for i, rec in labels.items() if i in kept_ids}
    return AlignedCorpus(kept, aligned, kept_labels, dropped)


# --- descriptive statistics -------------------------------------------------------

@dataclass
class FirstWordStats:
    """Per-class ranked (first word, percent) tables."""

    per_class: dict[str, list[tuple[str, float]]]
    class_totals: dict[str, int]
    skipped: int = 0


def first_word(text: str) -> str:
    """First whitespace-delimited token, lowercased, edge punctuation stripped."""
    parts = text.split()
    if not parts:
        return ""
    return _EDGE_PUNCT.sub("", parts[0].lower())


def first_word_stats(corpus: AlignedCorpus, labels=None) -> FirstWordStats:
    """Rank first words per class by share of the class's labelled queries.

    Queries without a label are skipped and counted. Percentages use the
    class's full labelled count as denominator, so a class sums to 100
    exactly when every labelled query yields a non-empty first word.
    """
    labels = labels if labels is not None else corpus.labels
    if labels is None:
        labels = {}
    counts: dict[str, dict[str, int]] = {}
    totals: dict[str, int] = {}
    skipped = 0
    for q in corpus.queries:
        rec = labels.get(q.id)
        if rec is None:
            skipped += 1
            continue
        totals[rec.label] = totals.get(rec.label, 0) + 1
        word = first_word(q.text)
        if not word:
            continue
        counts.setdefault(rec.label, {})
        counts[rec.label][word] = counts[rec.label].get(word, 0) + 1
    per_class = {}
    for cls, words in counts.items():
        total = totals[cls]
        ranked = sorted(
            ((w, 100.0 * c / total) for w, c in words.items()),
            key=lambda t: (-t[1], t[0]),
        )
        per_class[cls] = ranked
    for cls in totals:
        per_class.setdefault(cls, [])
    return FirstWordStats(per_class, totals, skipped)
