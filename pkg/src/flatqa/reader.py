"""Answer production from retrieved contexts.

Two backends: a deterministic extractive baseline (n-gram voting weighted
by reciprocal retrieval rank) that lets the whole pipeline run hermetically,
and an HTTP client for an external generative reader speaking the /read
protocol. Neither claims answer quality; the baseline exists so end-to-end
tests have a reader with zero model dependencies.
"""
from __future__ import annotations

import logging
import string
import time
from dataclasses import dataclass
from typing import Sequence

import httpx

logger = logging.getLogger(__name__)

DEFAULT_CONTEXT_LIMIT = 100
MAX_SPAN_TOKENS = 5

STOP_WORDS = frozenset("""
a an the is are was were be been being am and or but if then else of in on at
to for with by from as that this these those it its he she they them his her
their there here what which who whom when where why how not no nor do does
did doing have has had having will would can could shall should may might
must i you we us our your my me so than too very just about into over under
""".split())


@dataclass(frozen=True)
class ReaderContext:
    title: str
    text: str


@dataclass(frozen=True)
class ReaderRequest:
    question: str
    contexts: tuple[ReaderContext, ...]
    context_limit: int = DEFAULT_CONTEXT_LIMIT

    def __post_init__(self) -> None:
        if self.context_limit < 1:
            raise ValueError("context_limit must be >= 1")
        if len(self.contexts) > self.context_limit:
            raise ValueError(f"{len(self.contexts)} contexts exceed the "
                             f"limit of {self.context_limit}")


class ReaderError(RuntimeError):
    pass


def _span_tokens(text: str) -> list[str]:
    """Lowercased whitespace tokens with edge punctuation stripped, so that
    sentence-final words still match their stop-word or mid-sentence form."""
    tokens = (t.strip(string.punctuation) for t in text.lower().split())
    return [t for t in tokens if t]


def _span_stats(contexts: Sequence[ReaderContext]) -> dict[tuple[str, ...],
                                                            tuple[int, float, int, int]]:
    """Per span: (context count, sum of 1/rank, best rank, first pos there).

    Spans are 1..MAX_SPAN_TOKENS token n-grams over _span_tokens; a span
    made only of stop words is not a candidate.
    """
    stats: dict[tuple[str, ...], tuple[int, float, int, int]] = {}
    for rank, ctx in enumerate(contexts, start=1):
        tokens = _span_tokens(ctx.text)
        local: dict[tuple[str, ...], int] = {}
        for start in range(len(tokens)):
            for n in range(1, MAX_SPAN_TOKENS + 1):
                if start + n > len(tokens):
                    break
                span = tuple(tokens[start:start + n])
                if span not in local and not all(t in STOP_WORDS for t in span):
                    local[span] = start
        for span, pos in local.items():
            count, rr_sum, best_rank, best_pos = stats.get(span, (0, 0.0, rank, pos))
            stats[span] = (count + 1, rr_sum + 1.0 / rank, best_rank, best_pos)
    return stats


def read_baseline(request: ReaderRequest) -> str:
    """Highest-scoring extractive span: score = (number of containing
    contexts) x (sum of reciprocal ranks of those contexts). Ties go to the
    span seen earliest in the highest-ranked context, then to the shorter
    and lexicographically smaller span. Empty contexts give an empty answer.
    """
    stats = _span_stats(request.contexts)
    if not stats:
        return ""
    best_span = min(
        stats.items(),
        key=lambda item: (-item[1][0] * item[1][1], item[1][2], item[1][3],
                          len(item[0]), item[0]),
    )[0]
    return " ".join(best_span)


class RemoteReader:
    """Client for a reader service: POST {base_url}/read with
    {"question": ..., "contexts": [{"title","text"}, ...]} returning
    {"answer": ...}. Retries transport errors and 5xx with backoff."""

    def __init__(self, base_url: str, *, timeout: float = 60.0,
                 retries: int = 3, backoff: float = 0.25,
                 transport: httpx.BaseTransport | None = None) -> None:
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.backoff = backoff
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def read(self, request: ReaderRequest) -> str:
        payload = {
            "question": request.question,
            "contexts": [{"title": c.title, "text": c.text} for c in request.contexts],
        }
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                response = self._client.post(f"{self.base_url}/read", json=payload)
                if response.status_code >= 500:
                    last_error = ReaderError(
                        f"reader service returned {response.status_code}")
                elif response.status_code != 200:
                    raise ReaderError(f"reader service returned "
                                      f"{response.status_code}: {response.text[:200]}")
                else:
                    answer = str(response.json().get("answer", ""))
                    if not answer:
                        logger.warning("reader returned an empty answer for %r",
                                       request.question)
                    return answer
            except httpx.TransportError as exc:
                last_error = exc
            if attempt < self.retries:
                time.sleep(self.backoff * (2 ** attempt))
        raise ReaderError(f"read request failed after {self.retries + 1} "
                          f"attempts: {last_error}")


def read_remote(endpoint: str, request: ReaderRequest, **kwargs) -> str:
    """One-shot RemoteReader call."""
    client = RemoteReader(endpoint, **kwargs)
    try:
        return client.read(request)
    finally:
        client.close()
