"""Batch-embed a queries file into the core's ``.qemb`` container."""

from __future__ import annotations

import logging

import numpy as np

from .qemb import read_queries_tsv, write_qemb

log = logging.getLogger(__name__)


class DimensionDrift(RuntimeError):
    """The encoder changed output dimensionality mid-run."""


def embed_corpus(queries_tsv, encoder, out_path, batch_size: int = 64) -> int:
    """Encode every query, preserving file order; returns the row count.

    The output is written atomically: a mid-run failure (including
    dimension drift between batches) leaves no partial file behind.
    """
    ids, texts = read_queries_tsv(queries_tsv)
    chunks = []
    dim = None
    for start in range(0, len(texts), batch_size):
        batch = encoder.encode(texts[start : start + batch_size], batch_size)
        batch = np.ascontiguousarray(batch, dtype=np.float32)
        if dim is None:
            dim = batch.shape[1]
            if getattr(encoder, "dim", dim) != dim:
                raise DimensionDrift(
                    f"encoder declares dim {encoder.dim}, emitted {dim}"
                )
        elif batch.shape[1] != dim:
            raise DimensionDrift(
                f"batch at row {start} emitted dim {batch.shape[1]}, expected {dim}"
            )
        chunks.append(batch)
    matrix = (
        np.vstack(chunks) if chunks
        else np.zeros((0, getattr(encoder, "dim", 0)), dtype=np.float32)
    )
    write_qemb(np.asarray(ids, dtype=np.int64), matrix, out_path)
    log.info("embedded %d queries at dim %d -> %s", len(ids), matrix.shape[1] if len(ids) else 0, out_path)
    return len(ids)
