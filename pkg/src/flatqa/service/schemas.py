"""Request/response models for the retrieval service."""
from __future__ import annotations

from pydantic import BaseModel, Field


class EmbedRequest(BaseModel):
    texts: list[str]


class EmbedResponse(BaseModel):
    vectors: list[list[float]]


class ContextModel(BaseModel):
    title: str = ""
    text: str


class ReadRequest(BaseModel):
    question: str
    contexts: list[ContextModel]


class ReadResponse(BaseModel):
    answer: str


class RetrieveRequest(BaseModel):
    question: str
    k: int = Field(default=100, ge=1)
    linked_entities: list[str] | None = None


class ScoredDocModel(BaseModel):
    doc_id: str
    score: float
    source: str


class RetrieveResponse(BaseModel):
    results: list[ScoredDocModel]


class HealthResponse(BaseModel):
    status: str
    dim: int
    index_size: int
