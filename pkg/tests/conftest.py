import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from querytax.corpus import EmbeddingSet, QueryRecord


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_blobs(centers, per_blob, scale, seed, dim=None):
    """Gaussian blobs around the given centers; returns (X, true_labels)."""
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=np.float64)
    if dim is not None and centers.shape[1] < dim:
        pad = np.zeros((len(centers), dim - centers.shape[1]))
        centers = np.hstack([centers, pad])
    X, y = [], []
    for i, c in enumerate(centers):
        X.append(c + scale * rng.standard_normal((per_blob, centers.shape[1])))
        y.extend([i] * per_blob)
    return np.vstack(X), np.asarray(y)


def toy_corpus(n=6, d=4, seed=0, texts=None):
    """Aligned corpus with n sequentially-id'd queries and random embeddings."""
    from querytax.corpus import AlignedCorpus

    rng = np.random.default_rng(seed)
    queries = [
        QueryRecord(i, texts[i] if texts else f"query number {i}") for i in range(n)
    ]
    emb = EmbeddingSet(
        np.arange(n, dtype=np.int64),
        rng.standard_normal((n, d)).astype(np.float32),
    )
    return AlignedCorpus(queries, emb)
