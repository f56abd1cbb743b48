"""Annotation-candidate selection and weak-vote aggregation.

Candidates are spread across the embedding space with D-squared seeding
(the k-means++ initialisation rule): the first point is uniform at random
and every subsequent point is drawn with probability proportional to its
squared distance to the nearest point already chosen.
"""

from __future__ import annotations

import logging
from math import ceil

import numpy as np
from scipy.spatial.distance import cdist

from .corpus import GEOSPATIAL, NON_GEOSPATIAL
from .errors import DimMismatch, EmptyRequest, EmptyVotes, InsufficientPoints

log = logging.getLogger(__name__)


def _as_matrix(embeddings) -> np.ndarray:
    matrix = getattr(embeddings, "matrix", embeddings)
    return np.asarray(matrix, dtype=np.float64)


def kmeanspp_select(embeddings, k: int, seed: int) -> np.ndarray:
    """Select k row indices by D-squared seeding. Deterministic under seed.

    Points at squared distance zero from the chosen set carry no selection
    mass; when all remaining mass is zero the next index is drawn uniformly
    from the unchosen points so that k distinct indices are always returned.
    """
    X = _as_matrix(embeddings)
    n = X.shape[0]
    if k == 0:
        raise EmptyRequest("k must be positive")
    if k > n:
        raise InsufficientPoints(f"k={k} exceeds n={n}")
    rng = np.random.default_rng(seed)
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    d2[chosen[0]] = 0.0
    for i in range(1, k):
        total = d2.sum()
        if total > 0.0:
            idx = rng.choice(n, p=d2 / total)
        else:
            unchosen = np.setdiff1d(np.arange(n), chosen[:i])
            idx = unchosen[rng.integers(len(unchosen))]
        chosen[i] = idx
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
        d2[idx] = 0.0
    return chosen


def snap_to_nearest(centroids, embeddings, block: int = 1024) -> np.ndarray:
    """Map each centroid to the index of its nearest embedding row.

    Ties break toward the lowest index. Duplicate snapped indices are
    reported with a warning but returned as-is; callers deduplicate when
    emitting annotation candidates.
    """
    C = np.asarray(_as_matrix(centroids))
    X = _as_matrix(embeddings)
    if C.ndim != 2 or C.shape[1] != X.shape[1]:
        raise DimMismatch(
            f"centroid dim {C.shape[-1] if C.ndim == 2 else '?'} vs embedding dim {X.shape[1]}"
        )
    out = np.empty(len(C), dtype=np.int64)
    for start in range(0, len(C), block):
        D = cdist(C[start : start + block], X, metric="sqeuclidean")
        out[start : start + block] = D.argmin(axis=1)
    n_dup = len(out) - len(np.unique(out))
    if n_dup:
        log.warning("snap_to_nearest produced %d duplicate indices", n_dup)
    return out


def majority_vote(votes, threshold: int | None = None) -> tuple[str, int]:
    """Aggregate boolean votes into a label plus the positive-vote count.

    Default threshold is ceil(len/2), i.e. 3-of-5 for the usual five runs.
    """
    votes = list(votes)
    if not votes:
        raise EmptyVotes("no votes to aggregate")
    if threshold is None:
        threshold = ceil(len(votes) / 2)
    positive = sum(bool(v) for v in votes)
    label = GEOSPATIAL if positive >= threshold else NON_GEOSPATIAL
    return label, positive


def vote_histogram(vote_rows) -> dict[int, int]:
    """Count rows by number of positive votes (for vote-agreement plots)."""
    hist: dict[int, int] = {}
    for votes in vote_rows:
        _, positive = majority_vote(votes)
        hist[positive] = hist.get(positive, 0) + 1
    return hist


def load_votes(path) -> tuple[dict[int, list[bool]], list[int]]:
    """Read a votes TSV ``id\\tv1..vN``; rows whose second field is
    ``abstain`` are skipped and their ids returned separately."""
    from .errors import ParseError

    votes: dict[int, list[bool]] = {}
    abstained: list[int] = []
    truthy = {"true": True, "1": True, "false": False, "0": False}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise ParseError(n, "expected id plus votes")
            try:
                id_ = int(parts[0])
            except ValueError:
                raise ParseError(n, f"non-integer id {parts[0]!r}") from None
            if parts[1] == "abstain":
                abstained.append(id_)
                continue
            row = []
            for tok in parts[1:]:
                if tok.lower() not in truthy:
                    raise ParseError(n, f"vote {tok!r} is not boolean")
                row.append(truthy[tok.lower()])
            votes[id_] = row
    return votes, abstained
