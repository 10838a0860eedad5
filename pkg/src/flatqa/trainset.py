"""Retriever training data: BM25 positives and hard negatives, iterative
negative mining against successive retrievers, and multi-dataset mixing
with upsampling."""
from __future__ import annotations

import json
import logging
import random
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .bm25 import Bm25Index, search_bm25
from .corpus import (CorpusError, Passage, Question, iter_jsonl, normalize_question,
                     passage_from_dict, passage_to_dict, question_from_dict,
                     question_to_dict, write_jsonl_atomic)
from .evaluation import has_answer
from .tables import Table, sample_positive_chunk

logger = logging.getLogger(__name__)

DEFAULT_NEGATIVES_PER_Q = 1
DEFAULT_MINING_ROUNDS = 2
DEFAULT_CANDIDATE_DEPTH = 100


@dataclass
class TrainingSample:
    question: Question
    positive: Passage
    hard_negatives: list[Passage]
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        out = {
            "question": question_to_dict(self.question),
            "positive": passage_to_dict(self.positive),
            "hard_negatives": [passage_to_dict(p) for p in self.hard_negatives],
        }
        if self.flags:
            out["flags"] = list(self.flags)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingSample":
        return cls(
            question=question_from_dict(d["question"]),
            positive=passage_from_dict(d["positive"]),
            hard_negatives=[passage_from_dict(p) for p in d["hard_negatives"]],
            flags=tuple(d.get("flags", ())),
        )


@dataclass
class BuildStats:
    n_questions: int = 0
    n_samples: int = 0
    dropped_no_positive: int = 0
    no_negative_samples: int = 0
    table_positives: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _question_seed(question_id: str, seed: int) -> int:
    return zlib.crc32(question_id.encode("utf-8")) ^ seed


def _table_positive(chunk: Passage, question: Question,
                    tables_by_id: Mapping[str, Table] | None,
                    token_limit: int, seed: int) -> Passage | None:
    """Re-sample a table positive from the chunk's source table so it packs
    answer rows first; falls back to the retrieved chunk itself."""
    if not tables_by_id or not chunk.provenance:
        return None
    table = tables_by_id.get(chunk.provenance.get("table_id", ""))
    if table is None:
        return None
    sampled = sample_positive_chunk(table, list(question.answers), token_limit,
                                    rng_seed=_question_seed(question.id, seed))
    return sampled.passage if sampled else None


def build_samples_bm25(questions: Sequence[Question],
                       passages_by_id: Mapping[str, Passage],
                       bm25_index: Bm25Index,
                       negatives_per_q: int = DEFAULT_NEGATIVES_PER_Q,
                       candidate_depth: int = DEFAULT_CANDIDATE_DEPTH,
                       tables_by_id: Mapping[str, Table] | None = None,
                       token_limit: int = 100,
                       seed: int = 0) -> tuple[list[TrainingSample], BuildStats]:
    """Per question: positive = highest-BM25 answer-bearing passage among the
    top candidate_depth hits (table chunks are re-sampled answer-rows-first
    from the source table when available); negatives = the top BM25 hits
    containing no answer. Questions with no answer-bearing hit are dropped
    and counted. A sample with no available negative is emitted with an
    empty list and the "no_negatives" flag.
    """
    stats = BuildStats(n_questions=len(questions))
    samples: list[TrainingSample] = []
    for q in questions:
        hits = search_bm25(bm25_index, normalize_question(q.text), candidate_depth)
        positive: Passage | None = None
        negatives: list[Passage] = []
        flags: list[str] = []
        for doc in hits:
            p = passages_by_id.get(doc.doc_id)
            if p is None:
                raise KeyError(f"retrieved doc id {doc.doc_id!r} not in the corpus")
            if has_answer(p.text, q.answers):
                if positive is None:
                    positive = p
            elif len(negatives) < negatives_per_q:
                negatives.append(p)
        if positive is None:
            stats.dropped_no_positive += 1
            continue
        resampled = _table_positive(positive, q, tables_by_id, token_limit, seed)
        if resampled is not None:
            positive = resampled
            stats.table_positives += 1
        if not negatives:
            stats.no_negative_samples += 1
            flags.append("no_negatives")
        samples.append(TrainingSample(question=q, positive=positive,
                                      hard_negatives=negatives,
                                      flags=tuple(flags)))
        stats.n_samples += 1
    return samples, stats


RetrieverFn = Callable[[str], Sequence[str]]  # question text -> ranked doc ids


@dataclass
class MiningRoundStats:
    round_no: int
    replaced: int = 0
    kept_previous: int = 0
    mean_overlap: float = 0.0
    aborted: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def mine_iterative_negatives(samples: Sequence[TrainingSample],
                             retrievers: RetrieverFn | Sequence[RetrieverFn],
                             passages_by_id: Mapping[str, Passage],
                             round_count: int = DEFAULT_MINING_ROUNDS,
                             negatives_per_q: int = DEFAULT_NEGATIVES_PER_Q,
                             ) -> tuple[list[TrainingSample], list[MiningRoundStats]]:
    """Replace each sample's negatives round by round with the current
    retriever's top-ranked non-answer passages (never the positive).

    `retrievers` is one function reused every round or one per round. A
    retriever failure aborts that round (and the rounds after it, which
    would have been built on its output); samples keep their previous
    negatives. Per-round stats report the mean id-overlap with the previous
    round's negatives.
    """
    if round_count < 1:
        raise ValueError("round_count must be >= 1")
    if callable(retrievers):
        per_round: list[RetrieverFn] = [retrievers] * round_count
    else:
        per_round = list(retrievers)
        if len(per_round) != round_count:
            raise ValueError(f"got {len(per_round)} retrievers for "
                             f"{round_count} rounds")

    current = [TrainingSample(question=s.question, positive=s.positive,
                              hard_negatives=list(s.hard_negatives),
                              flags=s.flags) for s in samples]
    history: list[MiningRoundStats] = []
    for round_no, retriever in enumerate(per_round, start=1):
        stats = MiningRoundStats(round_no=round_no)
        proposed: list[list[Passage] | None] = []
        try:
            for s in current:
                ranked_ids = retriever(normalize_question(s.question.text))
                negatives: list[Passage] = []
                for doc_id in ranked_ids:
                    if doc_id == s.positive.id:
                        continue
                    p = passages_by_id.get(doc_id)
                    if p is None:
                        raise KeyError(f"retrieved doc id {doc_id!r} not in the corpus")
                    if has_answer(p.text, s.question.answers):
                        continue
                    negatives.append(p)
                    if len(negatives) >= negatives_per_q:
                        break
                proposed.append(negatives if negatives else None)
        except Exception as exc:
            logger.warning("negative mining round %d aborted: %s", round_no, exc)
            stats.aborted = True
            history.append(stats)
            break
        overlaps = []
        for s, negatives in zip(current, proposed):
            if negatives is None:
                stats.kept_previous += 1
                continue
            old_ids = {p.id for p in s.hard_negatives}
            new_ids = {p.id for p in negatives}
            if new_ids:
                overlaps.append(len(old_ids & new_ids) / len(new_ids))
            s.hard_negatives = negatives
            stats.replaced += 1
        stats.mean_overlap = sum(overlaps) / len(overlaps) if overlaps else 0.0
        history.append(stats)
    return current, history


def mix_datasets(streams: Sequence[tuple[str, Sequence[TrainingSample], int]],
                 seed: int = 0) -> tuple[list[TrainingSample], dict[str, int]]:
    """Repeat each stream's samples `factor` times and shuffle globally with
    a seeded rng. Returns the mixed list and per-tag emitted counts. Sample
    objects are reused as-is, so the multiset of contents is conserved
    exactly (factor copies per original)."""
    mixed: list[TrainingSample] = []
    counts: dict[str, int] = {}
    for tag, samples, factor in streams:
        if factor < 1:
            raise ValueError(f"upsample factor for {tag!r} must be >= 1, got {factor}")
        if tag in counts:
            raise ValueError(f"duplicate dataset tag {tag!r}")
        mixed.extend(list(samples) * factor)
        counts[tag] = len(samples) * factor
    random.Random(seed).shuffle(mixed)
    return mixed, counts


def load_samples(path: str | Path) -> list[TrainingSample]:
    out = []
    for lineno, obj in iter_jsonl(path):
        try:
            out.append(TrainingSample.from_dict(obj))
        except (KeyError, ValueError) as exc:
            raise CorpusError(
                f"{path}:{lineno}: bad training sample: {exc}",
                path=str(path), line=lineno,
                record=json.dumps(obj, ensure_ascii=False),
            ) from exc
    return out


def write_samples(samples: Sequence[TrainingSample], path: str | Path) -> None:
    write_jsonl_atomic(path, (s.to_dict() for s in samples))
