"""Text encoders producing fixed-dimension float32 vectors.

``HashingEncoder`` is a dependency-free deterministic baseline (word and
character n-gram hashing, L2-normalised); ``SentenceTransformerEncoder``
wraps any sentence-transformers model for real semantic embeddings.
"""

from __future__ import annotations

import hashlib

import numpy as np


class HashingEncoder:
    """Deterministic bag-of-features hash embedding.

    Tokens (words plus character trigrams) hash to signed buckets; rows are
    L2-normalised. Same text always maps to the same vector, so repeated
    runs produce byte-identical output files.
    """

    def __init__(self, dim: int = 384):
        self.dim = dim
        self.name = f"hash-{dim}"

    def _features(self, text: str):
        text = text.lower().strip()
        for word in text.split():
            yield "w:" + word
            padded = f" {word} "
            for i in range(len(padded) - 2):
                yield "c:" + padded[i : i + 3]

    def encode(self, texts, batch_size: int = 64) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            for feat in self._features(text):
                digest = hashlib.blake2b(feat.encode(), digest_size=8).digest()
                value = int.from_bytes(digest, "little")
                bucket = value % self.dim
                sign = 1.0 if (value >> 63) & 1 else -1.0
                out[row, bucket] += sign
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class SentenceTransformerEncoder:
    """Wrapper over sentence-transformers models (e.g. 384-d MiniLM/BGE

    class encoders). Imported lazily so the adapter works without the
    dependency installed."""

    def __init__(self, model_name: str, device: str | None = None):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_name, device=device)
        self.name = model_name
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts, batch_size: int = 64) -> np.ndarray:
        vecs = self._model.encode(
            list(texts), batch_size=batch_size, convert_to_numpy=True,
            show_progress_bar=False,
        )
        return np.ascontiguousarray(vecs, dtype=np.float32)


def get_encoder(name: str, dim: int = 384, device: str | None = None):
    if name.startswith("hash"):
        return HashingEncoder(dim)
    return SentenceTransformerEncoder(name, device)
