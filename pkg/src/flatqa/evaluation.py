"""Answer normalization, retrieval recall@k, exact match / Hits@1, and
source-attribution analysis."""
from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Mapping, Sequence

from .corpus import CorpusError, Passage, Question, SourceType, iter_jsonl, write_jsonl_atomic

if TYPE_CHECKING:
    from .fusion import RetrievalResult

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


def normalize_answer(s: str) -> str:
    """Lowercase, drop punctuation, strip articles as whole words, collapse
    whitespace. Idempotent."""
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    s = _ARTICLE_RE.sub(" ", s)
    return " ".join(s.split())


def has_answer(text: str, answers: Sequence[str]) -> bool:
    """True iff any normalized answer occurs as a contiguous token run in the
    normalized text. Token-level, so "art" does not match inside "Partition"."""
    ptoks = normalize_answer(text).split()
    if not ptoks:
        return False
    for answer in answers:
        atoks = normalize_answer(answer).split()
        n = len(atoks)
        if n == 0 or n > len(ptoks):
            continue
        for i in range(len(ptoks) - n + 1):
            if ptoks[i:i + n] == atoks:
                return True
    return False


@dataclass
class Metrics:
    recall_at: dict[int, float] = field(default_factory=dict)
    exact_match: float | None = None
    hits_at_1: float | None = None
    n_questions: int = 0

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"n_questions": self.n_questions}
        if self.recall_at:
            out["recall_at"] = {str(k): v for k, v in sorted(self.recall_at.items())}
        if self.exact_match is not None:
            out["exact_match"] = self.exact_match
        if self.hits_at_1 is not None:
            out["hits_at_1"] = self.hits_at_1
        return out


def _first_bearing_rank(result: "RetrievalResult",
                        question: Question,
                        passages_by_id: Mapping[str, Passage]) -> int | None:
    """1-based rank of the first answer-bearing retrieved passage, or None."""
    for rank, doc in enumerate(result.results, start=1):
        if doc.doc_id not in passages_by_id:
            raise KeyError(f"retrieved doc id {doc.doc_id!r} not in the evaluation corpus")
        if has_answer(passages_by_id[doc.doc_id].text, question.answers):
            return rank
    return None


def recall_at_k(results: Sequence["RetrievalResult"],
                questions: Sequence[Question],
                ks: Sequence[int],
                passages_by_id: Mapping[str, Passage]) -> Metrics:
    """Fraction of questions whose top-k retrieved passages contain an answer.

    Questions absent from the results count as misses; a result whose question
    id is unknown is an error.
    """
    by_qid = {q.id: q for q in questions}
    first_rank: dict[str, int | None] = {}
    for result in results:
        if result.question_id not in by_qid:
            raise ValueError(f"unknown question id {result.question_id!r} in results")
        first_rank[result.question_id] = _first_bearing_rank(
            result, by_qid[result.question_id], passages_by_id)

    n = len(questions)
    metrics = Metrics(n_questions=n)
    for k in ks:
        if k < 1:
            raise ValueError("k must be >= 1")
        hit = sum(
            1 for q in questions
            if (r := first_rank.get(q.id)) is not None and r <= k
        )
        metrics.recall_at[k] = hit / n if n else 0.0
    return metrics


def exact_match(predictions: Mapping[str, str], gold: Sequence[Question]) -> Metrics:
    """Fraction of questions whose normalized prediction equals any normalized
    gold answer. Missing or empty predictions count as wrong. Hits@1 is the
    same quantity."""
    n = len(gold)
    correct = sum(1 for q in gold if _is_correct(predictions.get(q.id), q))
    value = correct / n if n else 0.0
    return Metrics(exact_match=value, hits_at_1=value, n_questions=n)


def _is_correct(prediction: str | None, question: Question) -> bool:
    if prediction is None:
        return False
    pred = normalize_answer(prediction)
    if not pred:
        return False
    return any(pred == normalize_answer(a) for a in question.answers)


@dataclass
class AttributionReport:
    """Per-source fractions of questions with at least one answer-bearing
    retrieved passage, over the full set and over the improvement set
    (correct under the candidate, wrong under the baseline). Fractions are
    computed over the candidate system's retrievals."""

    n_questions: int
    n_improvement: int
    full_set: dict[str, float]
    improvement_set: dict[str, float]
    degenerate: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_questions": self.n_questions,
            "n_improvement": self.n_improvement,
            "full_set": self.full_set,
            "improvement_set": self.improvement_set,
            "degenerate": self.degenerate,
        }


def source_attribution(results_a: Sequence["RetrievalResult"],
                       results_b: Sequence["RetrievalResult"],
                       predictions_a: Mapping[str, str],
                       predictions_b: Mapping[str, str],
                       gold: Sequence[Question],
                       passages_by_id: Mapping[str, Passage]) -> AttributionReport:
    gold_ids = {q.id for q in gold}
    for name, results in (("baseline", results_a), ("candidate", results_b)):
        ids = {r.question_id for r in results}
        if ids != gold_ids:
            raise ValueError(f"{name} results cover a different question set than gold")

    by_qid = {q.id: q for q in gold}
    b_by_qid = {r.question_id: r for r in results_b}

    improvement = [
        q for q in gold
        if _is_correct(predictions_b.get(q.id), q) and not _is_correct(predictions_a.get(q.id), q)
    ]

    def bearing_sources(q: Question) -> set[SourceType]:
        found: set[SourceType] = set()
        for doc in b_by_qid[q.id].results:
            if doc.source in found:
                continue
            if doc.doc_id not in passages_by_id:
                raise KeyError(f"retrieved doc id {doc.doc_id!r} not in the evaluation corpus")
            if has_answer(passages_by_id[doc.doc_id].text, q.answers):
                found.add(doc.source)
        return found

    def fractions(questions: Sequence[Question]) -> dict[str, float]:
        n = len(questions)
        counts = {s: 0 for s in SourceType}
        for q in questions:
            for s in bearing_sources(q):
                counts[s] += 1
        return {s.value: (counts[s] / n if n else 0.0) for s in SourceType}

    return AttributionReport(
        n_questions=len(gold),
        n_improvement=len(improvement),
        full_set=fractions(list(gold)),
        improvement_set=fractions(improvement),
        degenerate=not improvement,
    )


def format_metrics(metrics: Metrics) -> str:
    """Human-readable metric table."""
    lines = [f"questions: {metrics.n_questions}"]
    for k in sorted(metrics.recall_at):
        lines.append(f"recall@{k:<4d} {metrics.recall_at[k]:.4f}")
    if metrics.exact_match is not None:
        lines.append(f"exact_match {metrics.exact_match:.4f}")
    if metrics.hits_at_1 is not None:
        lines.append(f"hits@1      {metrics.hits_at_1:.4f}")
    return "\n".join(lines)


def load_predictions(path) -> dict[str, str]:
    """Predictions JSONL: {"question_id", "answer"} per line."""
    out: dict[str, str] = {}
    for lineno, obj in iter_jsonl(path):
        if "question_id" not in obj or "answer" not in obj:
            raise CorpusError(
                f"{path}:{lineno}: prediction needs question_id and answer",
                path=str(path), line=lineno, record=str(obj))
        qid = str(obj["question_id"])
        if qid in out:
            raise CorpusError(f"{path}:{lineno}: duplicate prediction for {qid!r}",
                              path=str(path), line=lineno, record=str(obj))
        out[qid] = str(obj["answer"])
    return out


def write_predictions(predictions: Mapping[str, str], path) -> None:
    write_jsonl_atomic(path, ({"question_id": qid, "answer": ans}
                              for qid, ans in predictions.items()))
