"""Writer for the core's ``.qemb`` embedding container.

Layout: magic ``QEMB``, u32 LE version (=1), u64 LE n, u32 LE d, then n
u64 LE ids and n*d f32 LE row-major values. The adapter owns no reader;
the core is the consumer.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"QEMB"
VERSION = 1


def write_qemb(ids, matrix, path) -> None:
    """Atomic write (temp file + rename): either the full file or nothing."""
    ids = np.ascontiguousarray(ids, dtype="<u8")
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2 or len(ids) != matrix.shape[0]:
        raise ValueError("ids and matrix rows must match")
    if not np.isfinite(matrix).all():
        raise ValueError("matrix contains non-finite values")
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".qemb.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", VERSION))
            fh.write(struct.pack("<Q", matrix.shape[0]))
            fh.write(struct.pack("<I", matrix.shape[1]))
            fh.write(ids.tobytes())
            fh.write(matrix.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_queries_tsv(path) -> tuple[list[int], list[str]]:
    """Read the core's queries TSV (header ``id\\ttext``), order preserved."""
    ids: list[int] = []
    texts: list[str] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n")
        if header != "id\ttext":
            raise ValueError(f"{path}: expected header 'id\\ttext'")
        for n, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{n}: expected 2 fields")
            ids.append(int(parts[0]))
            texts.append(parts[1])
    return ids, texts
