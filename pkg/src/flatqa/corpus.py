"""Shared domain types, tokenization, and the JSONL corpus/question data model."""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence


class SourceType(str, Enum):
    TEXT = "text"
    LIST = "list"
    TABLE = "table"
    KB = "kb"


class CorpusError(ValueError):
    """Malformed or inconsistent corpus data.

    Carries the file path, 1-based line number, and the offending record when
    known, so callers (the CLI in particular) can report the first bad record.
    """

    def __init__(self, message: str, *, path: str | None = None,
                 line: int | None = None, record: str | None = None):
        super().__init__(message)
        self.path = path
        self.line = line
        self.record = record


def tokenize(text: str) -> list[str]:
    """Split text on runs of Unicode whitespace.

    Deterministic and total: empty input yields an empty list, and joining the
    tokens with single spaces round-trips to the whitespace-normalized input.
    """
    return text.split()


def normalize_question(text: str) -> str:
    """Lowercase, strip question marks, and collapse whitespace. Idempotent."""
    return " ".join(text.lower().replace("?", "").split())


@dataclass(frozen=True)
class Passage:
    """The universal flattened document unit with source provenance.

    token_count is derived from tokenize(text) at construction and is not part
    of the wire format.
    """

    id: str
    source: SourceType
    title: str
    text: str
    provenance: dict | None = None
    token_count: int = field(init=False)

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"passage {self.id!r} has empty text")
        object.__setattr__(self, "token_count", len(tokenize(self.text)))


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    answers: tuple[str, ...]
    linked_entities: tuple[str, ...] = ()
    dataset: str = ""

    def __post_init__(self):
        if not self.answers or any(not a for a in self.answers):
            raise ValueError(f"question {self.id!r} needs at least one non-empty answer")


def passage_to_dict(p: Passage) -> dict[str, Any]:
    return {
        "id": p.id,
        "source": p.source.value,
        "title": p.title,
        "text": p.text,
        "provenance": p.provenance,
    }


def passage_from_dict(d: dict[str, Any]) -> Passage:
    for key in ("id", "source", "title", "text"):
        if key not in d:
            raise ValueError(f"missing {key!r} field")
    return Passage(
        id=str(d["id"]),
        source=SourceType(d["source"]),
        title=str(d["title"]),
        text=str(d["text"]),
        provenance=d.get("provenance"),
    )


def question_to_dict(q: Question) -> dict[str, Any]:
    return {
        "id": q.id,
        "text": q.text,
        "answers": list(q.answers),
        "linked_entities": list(q.linked_entities),
        "dataset": q.dataset,
    }


def question_from_dict(d: dict[str, Any]) -> Question:
    for key in ("id", "text", "answers"):
        if key not in d:
            raise ValueError(f"missing {key!r} field")
    return Question(
        id=str(d["id"]),
        text=str(d["text"]),
        answers=tuple(str(a) for a in d["answers"]),
        linked_entities=tuple(str(e) for e in d.get("linked_entities", [])),
        dataset=str(d.get("dataset", "")),
    )


def iter_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    """Yield (line_number, parsed_object) pairs; blank lines are skipped."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise CorpusError(
                    f"{path}:{lineno}: invalid JSON: {exc}",
                    path=str(path), line=lineno, record=stripped,
                ) from exc
            if not isinstance(obj, dict):
                raise CorpusError(
                    f"{path}:{lineno}: expected a JSON object",
                    path=str(path), line=lineno, record=stripped,
                )
            yield lineno, obj


def write_jsonl_atomic(path: str | Path, records: Iterable[dict]) -> None:
    """Write one JSON object per line via a temp file + rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, ensure_ascii=False))
                fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path: str | Path, content: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_corpus(path: str | Path) -> list[Passage]:
    """Load a passage corpus from JSONL. Duplicate ids and bad lines are errors."""
    passages: list[Passage] = []
    seen: set[str] = set()
    for lineno, obj in iter_jsonl(path):
        try:
            p = passage_from_dict(obj)
        except ValueError as exc:
            raise CorpusError(
                f"{path}:{lineno}: {exc}",
                path=str(path), line=lineno, record=json.dumps(obj, ensure_ascii=False),
            ) from exc
        if p.id in seen:
            raise CorpusError(
                f"{path}:{lineno}: duplicate passage id {p.id!r}",
                path=str(path), line=lineno, record=json.dumps(obj, ensure_ascii=False),
            )
        seen.add(p.id)
        passages.append(p)
    return passages


def write_corpus(passages: Sequence[Passage], path: str | Path) -> None:
    seen: set[str] = set()
    for p in passages:
        if p.id in seen:
            raise CorpusError(f"duplicate passage id {p.id!r}", record=p.id)
        seen.add(p.id)
    write_jsonl_atomic(path, (passage_to_dict(p) for p in passages))


def load_questions(path: str | Path) -> list[Question]:
    questions: list[Question] = []
    seen: set[str] = set()
    for lineno, obj in iter_jsonl(path):
        try:
            q = question_from_dict(obj)
        except ValueError as exc:
            raise CorpusError(
                f"{path}:{lineno}: {exc}",
                path=str(path), line=lineno, record=json.dumps(obj, ensure_ascii=False),
            ) from exc
        if q.id in seen:
            raise CorpusError(
                f"{path}:{lineno}: duplicate question id {q.id!r}",
                path=str(path), line=lineno, record=json.dumps(obj, ensure_ascii=False),
            )
        seen.add(q.id)
        questions.append(q)
    return questions


def write_questions(questions: Sequence[Question], path: str | Path) -> None:
    write_jsonl_atomic(path, (question_to_dict(q) for q in questions))


def corpus_index(passages: Iterable[Passage]) -> dict[str, Passage]:
    """Map passage id -> passage, rejecting duplicates."""
    by_id: dict[str, Passage] = {}
    for p in passages:
        if p.id in by_id:
            raise CorpusError(f"duplicate passage id {p.id!r}", record=p.id)
        by_id[p.id] = p
    return by_id
