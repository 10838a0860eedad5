"""Retrieval over heterogeneous sources.

Two strategies: a joint dense index over everything, or separate indices
merged under a fixed KB quota. KB passages are produced per question from
the 2-hop neighborhood of its linked entities (a global index over all
relations is off the table at real KB scale), with relation embeddings
cached by relation id. The quota is tuned by answer recall on a dev set.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import (CorpusError, Passage, Question, iter_jsonl, normalize_question,
                     write_jsonl_atomic)
from .dense import DenseIndex, ScoredDoc, search_dense
from .embedder import Embedder
from .evaluation import has_answer
from .kb import KBGraph, RelationSentence, pack_relations, relation_sentence, two_hop_neighborhood

DEFAULT_CANDIDATE_QUOTAS = (0, 5, 10, 20, 30, 50)


@dataclass(frozen=True)
class QuotaPolicy:
    k_total: int = 100
    kb_quota: int = 0

    def __post_init__(self) -> None:
        if self.k_total < 1:
            raise ValueError("k_total must be >= 1")
        if not 0 <= self.kb_quota <= self.k_total:
            raise ValueError(
                f"kb_quota {self.kb_quota} outside [0, {self.k_total}]")


@dataclass
class RetrievalResult:
    question_id: str
    results: list[ScoredDoc]

    def to_dict(self) -> dict:
        return {"question_id": self.question_id,
                "results": [d.to_dict() for d in self.results]}

    @classmethod
    def from_dict(cls, d: dict) -> "RetrievalResult":
        return cls(question_id=str(d["question_id"]),
                   results=[ScoredDoc.from_dict(x) for x in d["results"]])


def load_results(path: str | Path) -> list[RetrievalResult]:
    out = []
    for lineno, obj in iter_jsonl(path):
        try:
            out.append(RetrievalResult.from_dict(obj))
        except (KeyError, ValueError) as exc:
            raise CorpusError(
                f"{path}:{lineno}: bad retrieval record: {exc}",
                path=str(path), line=lineno,
                record=json.dumps(obj, ensure_ascii=False),
            ) from exc
    return out


def write_results(results: Sequence[RetrievalResult], path: str | Path) -> None:
    write_jsonl_atomic(path, (r.to_dict() for r in results))


def retrieve_joint(joint_index: DenseIndex, query: np.ndarray, k: int) -> list[ScoredDoc]:
    """Top-k over the unified index; sources compete purely on score."""
    return search_dense(joint_index, query, k)[0]


def merge_quota(main_results: Sequence[ScoredDoc],
                kb_results: Sequence[ScoredDoc],
                policy: QuotaPolicy) -> list[ScoredDoc]:
    """Fill kb_quota slots from the KB list and the rest from the main list.

    A short KB list frees its unused slots to main; a short main list is
    backfilled from the KB list beyond its quota. Duplicated doc ids are
    taken once (first at the better score). Membership is quota-determined;
    the final list is re-sorted by score (ties by ascending doc id).
    """
    chosen: dict[str, ScoredDoc] = {}

    def take(pool: Sequence[ScoredDoc], start: int, want: int) -> int:
        taken = 0
        pos = start
        while taken < want and pos < len(pool):
            doc = pool[pos]
            pos += 1
            if doc.doc_id in chosen:
                continue
            chosen[doc.doc_id] = doc
            taken += 1
        return pos

    kb_pos = take(kb_results, 0, min(policy.kb_quota, policy.k_total))
    take(main_results, 0, policy.k_total - len(chosen))
    if len(chosen) < policy.k_total:
        take(kb_results, kb_pos, policy.k_total - len(chosen))
    return sorted(chosen.values(), key=lambda d: (-d.score, d.doc_id))


KbRetriever = Callable[[Question], list[ScoredDoc]]


def tune_quota(dev_questions: Sequence[Question],
               main_index: DenseIndex,
               embedder: Embedder,
               kb_retriever: KbRetriever,
               passages_by_id: Mapping[str, Passage],
               candidate_quotas: Sequence[int] = DEFAULT_CANDIDATE_QUOTAS,
               k_total: int = 100) -> tuple[QuotaPolicy, dict[int, float]]:
    """Pick the KB quota maximizing answer recall@k_total on the dev set.

    Ties go to the smallest quota. Returns the winning policy and the full
    per-candidate recall table. Main and KB retrieval run once per question;
    only the merge is repeated per candidate.
    """
    if not candidate_quotas:
        raise ValueError("candidate_quotas must be non-empty")
    queries = embedder.embed([normalize_question(q.text) for q in dev_questions])
    main_lists = (search_dense(main_index, queries, k_total)
                  if dev_questions else [])
    kb_lists = [kb_retriever(q) for q in dev_questions]

    def bearing(doc: ScoredDoc, q: Question) -> bool:
        passage = passages_by_id.get(doc.doc_id)
        if passage is None:
            raise KeyError(f"retrieved doc id {doc.doc_id!r} not in the corpus")
        return has_answer(passage.text, q.answers)

    table: dict[int, float] = {}
    for quota in candidate_quotas:
        policy = QuotaPolicy(k_total=k_total, kb_quota=quota)
        hits = 0
        for q, main, kb in zip(dev_questions, main_lists, kb_lists):
            merged = merge_quota(main, kb, policy)
            if any(bearing(doc, q) for doc in merged):
                hits += 1
        table[quota] = hits / len(dev_questions) if dev_questions else 0.0
    best = min(candidate_quotas, key=lambda quota: (-table[quota], quota))
    return QuotaPolicy(k_total=k_total, kb_quota=best), table


@dataclass
class KBCandidateRetriever:
    """Per-question KB retrieval: 2-hop relation set, linearize, embed,
    exhaustive dot-product ranking, pack top-k relations into passages.

    Relation embeddings are cached by relation id (insert-if-absent; safe
    under the interpreter lock for concurrent readers). The passage score is
    the max over member relation scores.
    """

    graph: KBGraph
    embedder: Embedder
    k_relations: int = 100
    token_limit: int = 100
    _cache: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def candidates(self, question: Question,
                   entities: Sequence[str] | None = None,
                   ) -> tuple[list[ScoredDoc], list[Passage]]:
        seeds = tuple(entities) if entities is not None else question.linked_entities
        return self.candidates_for_text(question.text, question.id, seeds)

    def candidates_for_text(self, text: str, qid: str, seeds: Sequence[str],
                            ) -> tuple[list[ScoredDoc], list[Passage]]:
        if not seeds:
            return [], []
        relations = sorted(two_hop_neighborhood(self.graph, seeds),
                           key=lambda r: r.relation_id)
        if not relations:
            return [], []
        sentences = [relation_sentence(r) for r in relations]

        missing = [(i, s) for i, s in enumerate(sentences)
                   if s.relation_id not in self._cache]
        if missing:
            vectors = self.embedder.embed([s.text for _, s in missing])
            for (_, s), vec in zip(missing, vectors):
                self._cache.setdefault(s.relation_id, vec)
        emb = np.stack([self._cache[s.relation_id] for s in sentences])

        qvec = self.embedder.embed([normalize_question(text)])[0]
        scores = emb @ qvec
        order = sorted(range(len(sentences)),
                       key=lambda i: (-scores[i], sentences[i].relation_id))
        top = order[: self.k_relations]
        ranked = [sentences[i] for i in top]
        score_by_rel = {sentences[i].relation_id: float(scores[i]) for i in top}

        passages = pack_relations(ranked, self.token_limit, id_prefix=f"kb:{qid}")
        docs = []
        for p in passages:
            member_scores = [score_by_rel[rid] for rid in p.provenance["relation_ids"]]
            docs.append(ScoredDoc(doc_id=p.id, score=max(member_scores),
                                  source=p.source))
        pairs = sorted(zip(docs, passages), key=lambda dp: (-dp[0].score, dp[0].doc_id))
        docs = [d for d, _ in pairs]
        passages = [p for _, p in pairs]
        return docs, passages

    def __call__(self, question: Question,
                 entities: Sequence[str] | None = None) -> list[ScoredDoc]:
        return self.candidates(question, entities)[0]


def kb_candidates_for_question(question: Question, graph: KBGraph,
                               embedder: Embedder, k: int = 100,
                               entities: Sequence[str] | None = None,
                               token_limit: int = 100,
                               ) -> tuple[list[ScoredDoc], list[Passage]]:
    """One-shot form of KBCandidateRetriever.candidates (no shared cache)."""
    retriever = KBCandidateRetriever(graph=graph, embedder=embedder,
                                     k_relations=k, token_limit=token_limit)
    return retriever.candidates(question, entities)
