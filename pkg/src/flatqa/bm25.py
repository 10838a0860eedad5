"""Okapi BM25 over lowercased whitespace tokens of "title text".

Parameters default to k1=0.9, b=0.4 with idf = ln(1 + (N - n + 0.5) / (n + 0.5)),
which is strictly positive, so every document sharing at least one query
token is a scored candidate. Ties break by ascending doc id. The index
round-trips through deterministic JSON (sorted keys), so rebuilding and
saving the same corpus is byte-identical.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import Passage, SourceType, write_text_atomic
from .dense import ScoredDoc, passage_embedding_text

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4


def bm25_tokens(text: str) -> list[str]:
    return text.lower().split()


@dataclass
class Bm25Index:
    ids: list[str]
    sources: list[SourceType]
    doc_len: list[int]
    postings: dict[str, list[tuple[int, int]]]  # token -> [(doc_pos, tf), ...]
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    avg_len: float = field(init=False)

    def __post_init__(self) -> None:
        self.avg_len = (sum(self.doc_len) / len(self.doc_len)) if self.doc_len else 0.0

    def __len__(self) -> int:
        return len(self.ids)

    def idf(self, token: str) -> float:
        n = len(self.postings.get(token, ()))
        return math.log(1.0 + (len(self.ids) - n + 0.5) / (n + 0.5))

    def save(self, path: str | Path) -> None:
        payload = {
            "version": 1,
            "k1": self.k1,
            "b": self.b,
            "ids": self.ids,
            "sources": [s.value for s in self.sources],
            "doc_len": self.doc_len,
            "postings": {t: [[pos, tf] for pos, tf in plist]
                         for t, plist in self.postings.items()},
        }
        write_text_atomic(path, json.dumps(payload, sort_keys=True,
                                           ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Bm25Index":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("version") != 1:
            raise ValueError(f"{path}: unsupported bm25 index version "
                             f"{payload.get('version')!r}")
        return cls(
            ids=list(payload["ids"]),
            sources=[SourceType(s) for s in payload["sources"]],
            doc_len=[int(x) for x in payload["doc_len"]],
            postings={t: [(int(pos), int(tf)) for pos, tf in plist]
                      for t, plist in payload["postings"].items()},
            k1=float(payload["k1"]),
            b=float(payload["b"]),
        )


def build_bm25_index(passages: Sequence[Passage], k1: float = DEFAULT_K1,
                     b: float = DEFAULT_B) -> Bm25Index:
    ids = [p.id for p in passages]
    seen: set[str] = set()
    for doc_id in ids:
        if doc_id in seen:
            raise ValueError(f"duplicate doc id {doc_id!r}")
        seen.add(doc_id)
    sources = [p.source for p in passages]
    doc_len: list[int] = []
    postings: dict[str, list[tuple[int, int]]] = {}
    for pos, p in enumerate(passages):
        tokens = bm25_tokens(passage_embedding_text(p))
        doc_len.append(len(tokens))
        for token, tf in Counter(tokens).items():
            postings.setdefault(token, []).append((pos, tf))
    for plist in postings.values():
        plist.sort(key=lambda entry: ids[entry[0]])
    return Bm25Index(ids=ids, sources=sources, doc_len=doc_len,
                     postings=postings, k1=k1, b=b)


def search_bm25(index: Bm25Index, query: str, k: int) -> list[ScoredDoc]:
    """Top-k candidates sharing at least one query token.

    Repeated query tokens contribute once per occurrence.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scores: dict[int, float] = {}
    for token, q_count in Counter(bm25_tokens(query)).items():
        plist = index.postings.get(token)
        if not plist:
            continue
        idf = index.idf(token)
        for pos, tf in plist:
            denom = tf + index.k1 * (1.0 - index.b
                                     + index.b * index.doc_len[pos] / index.avg_len)
            scores[pos] = scores.get(pos, 0.0) + q_count * idf * tf * (index.k1 + 1.0) / denom
    ranked = sorted(scores.items(), key=lambda item: (-item[1], index.ids[item[0]]))
    return [ScoredDoc(doc_id=index.ids[pos], score=score, source=index.sources[pos])
            for pos, score in ranked[:k]]
