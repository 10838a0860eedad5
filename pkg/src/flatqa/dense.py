"""Exact dense retrieval over float32 passage embeddings.

Search is exhaustive inner product with a deterministic tie rule (equal
scores break by ascending doc id), so results match a full-sort oracle
bit for bit. Indexes persist in a small binary container ("HFDI") whose
embedding matrix is memory-mapped on load.
"""
from __future__ import annotations

import os
import struct
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Passage, SourceType
from .embedder import Embedder, EmbeddingError

MAGIC = b"HFDI"
VERSION = 1

_SOURCE_CODES = {
    SourceType.TEXT: 0,
    SourceType.LIST: 1,
    SourceType.TABLE: 2,
    SourceType.KB: 3,
}
_CODE_SOURCES = {v: k for k, v in _SOURCE_CODES.items()}


@dataclass(frozen=True)
class ScoredDoc:
    doc_id: str
    score: float
    source: SourceType

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "score": self.score, "source": self.source.value}

    @classmethod
    def from_dict(cls, d: dict) -> "ScoredDoc":
        return cls(doc_id=str(d["doc_id"]), score=float(d["score"]),
                   source=SourceType(d["source"]))


def passage_embedding_text(p: Passage) -> str:
    """Text fed to the embedder: title prepended to the passage body."""
    return f"{p.title} {p.text}" if p.title else p.text


@dataclass
class DenseIndex:
    ids: list[str]
    sources: list[SourceType]
    matrix: np.ndarray  # (n, dim) float32, row i embeds ids[i]

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def from_matrix(cls, ids: Sequence[str], sources: Sequence[SourceType],
                    matrix: np.ndarray) -> "DenseIndex":
        matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        if matrix.ndim != 2:
            raise ValueError("matrix must be 2-D (n_docs, dim)")
        if len(ids) != matrix.shape[0] or len(sources) != matrix.shape[0]:
            raise ValueError("ids/sources length must match matrix rows")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate doc ids in index")
        return cls(ids=list(ids), sources=list(sources), matrix=matrix)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        n, dim = self.matrix.shape
        fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."),
                                   prefix=path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(MAGIC)
                fh.write(struct.pack("<IIQ", VERSION, dim, n))
                for doc_id, source in zip(self.ids, self.sources):
                    raw = doc_id.encode("utf-8")
                    fh.write(struct.pack("<BI", _SOURCE_CODES[source], len(raw)))
                    fh.write(raw)
                fh.write(np.ascontiguousarray(self.matrix, dtype=np.float32).tobytes())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def load(cls, path: str | Path, mmap: bool = True) -> "DenseIndex":
        path = Path(path)
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != MAGIC:
                raise ValueError(f"{path}: not a dense index file (bad magic {magic!r})")
            version, dim, n = struct.unpack("<IIQ", fh.read(16))
            if version != VERSION:
                raise ValueError(f"{path}: unsupported index version {version}")
            ids: list[str] = []
            sources: list[SourceType] = []
            for _ in range(n):
                code, length = struct.unpack("<BI", fh.read(5))
                if code not in _CODE_SOURCES:
                    raise ValueError(f"{path}: unknown source code {code}")
                ids.append(fh.read(length).decode("utf-8"))
                sources.append(_CODE_SOURCES[code])
            offset = fh.tell()
        expected = offset + n * dim * 4
        actual = os.path.getsize(path)
        if actual != expected:
            raise ValueError(f"{path}: truncated index "
                             f"(expected {expected} bytes, found {actual})")
        if mmap:
            matrix = np.memmap(path, dtype=np.float32, mode="r",
                               offset=offset, shape=(n, dim))
        else:
            matrix = np.fromfile(path, dtype=np.float32, offset=offset,
                                 count=n * dim).reshape(n, dim)
        return cls(ids=ids, sources=sources, matrix=matrix)


def build_dense_index(passages: Sequence[Passage], embedder: Embedder,
                      batch_size: int = 256, workers: int = 4) -> DenseIndex:
    """Embed passages in batches (optionally across threads) into an index.

    Row order always follows the input passage order. An embedding failure
    is re-raised as EmbeddingError carrying the passage ids of the failed
    batch so callers can report or retry precisely.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not passages:
        raise ValueError("cannot build a dense index over an empty corpus")
    ids = [p.id for p in passages]
    seen: set[str] = set()
    for doc_id in ids:
        if doc_id in seen:
            raise ValueError(f"duplicate doc id {doc_id!r}")
        seen.add(doc_id)
    sources = [p.source for p in passages]
    texts = [passage_embedding_text(p) for p in passages]

    batches = [(start, texts[start:start + batch_size])
               for start in range(0, len(texts), batch_size)]

    def run(batch: tuple[int, list[str]]) -> tuple[int, np.ndarray]:
        start, chunk = batch
        try:
            return start, embedder.embed(chunk)
        except Exception as exc:
            raise EmbeddingError(
                f"failed to embed batch starting at passage {ids[start]!r}: {exc}",
                batch_ids=ids[start:start + len(chunk)],
            ) from exc

    matrix = np.zeros((len(texts), embedder.dim), dtype=np.float32)
    if workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, batches))
    else:
        results = [run(b) for b in batches]
    for start, block in results:
        matrix[start:start + block.shape[0]] = block
    return DenseIndex(ids=ids, sources=sources, matrix=matrix)


def _top_k_column(index: DenseIndex, scores: np.ndarray, k: int) -> list[ScoredDoc]:
    n = scores.shape[0]
    k_eff = min(k, n)
    if k_eff == 0:
        return []
    if k_eff == n:
        chosen = list(range(n))
    else:
        kth = np.partition(scores, n - k_eff)[n - k_eff]
        above = np.flatnonzero(scores > kth).tolist()
        equal = np.flatnonzero(scores == kth).tolist()
        equal.sort(key=lambda pos: index.ids[pos])
        chosen = above + equal[: k_eff - len(above)]
    chosen.sort(key=lambda pos: (-scores[pos], index.ids[pos]))
    return [ScoredDoc(doc_id=index.ids[pos], score=float(scores[pos]),
                      source=index.sources[pos]) for pos in chosen]


def search_dense(index: DenseIndex, queries: np.ndarray, k: int,
                 ) -> list[list[ScoredDoc]]:
    """Exact top-k by inner product for each query row.

    Ties at the score boundary are resolved by ascending doc id, making the
    output identical to a full argsort over (-score, doc_id).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    queries = np.asarray(queries, dtype=np.float32)
    single = queries.ndim == 1
    if single:
        queries = queries[None, :]
    if queries.shape[1] != index.dim:
        raise ValueError(f"query dim {queries.shape[1]} != index dim {index.dim}")
    if len(index) == 0:
        return [[] for _ in range(queries.shape[0])]
    scores = np.asarray(index.matrix) @ queries.T  # (n_docs, n_queries)
    return [_top_k_column(index, scores[:, j], k) for j in range(queries.shape[0])]
