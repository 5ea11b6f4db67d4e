import io
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from toxicspans.embeddings import EmbeddingTable


def make_table(words, dim=4, seed=0) -> EmbeddingTable:
    """Small deterministic embedding table for unit tests."""
    rng = np.random.default_rng(seed)
    loaded = rng.normal(size=(len(words), dim))
    matrix = np.vstack([loaded, loaded.mean(axis=0, keepdims=True), np.zeros((1, dim))])
    return EmbeddingTable(
        dim=dim,
        vocab={w: i for i, w in enumerate(words)},
        matrix=matrix,
        unk_index=len(words),
        pad_index=len(words) + 1,
    )


@pytest.fixture
def tiny_table() -> EmbeddingTable:
    return make_table(["the", "cat", "sat", "loser", "nice", "dog", "!"], dim=4)


def csv_bytes(rows, header=("spans", "text")) -> io.BytesIO:
    """Build an in-memory dataset CSV with proper quoting."""
    import csv as _csv

    buf = io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return io.BytesIO(buf.getvalue().encode("utf-8"))
