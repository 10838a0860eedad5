"""HTTP service exposing the query-time operations.

Endpoints: /embed (the embedding wire protocol), /read (the reader wire
protocol, served by the extractive baseline), /retrieve (joint or
quota-merged retrieval over a loaded index), and /health. Batch ETL
(flattening, index builds, trainset construction) stays in the CLI; only
per-request operations belong here.
"""
from __future__ import annotations

from dataclasses import dataclass

from fastapi import FastAPI, HTTPException

from ..corpus import normalize_question
from ..dense import DenseIndex, search_dense
from ..embedder import Embedder, HashingEmbedder
from ..fusion import KBCandidateRetriever, QuotaPolicy, merge_quota
from ..reader import ReaderContext, ReaderRequest, read_baseline
from .schemas import (ContextModel, EmbedRequest, EmbedResponse, HealthResponse,
                      ReadRequest, ReadResponse, RetrieveRequest, RetrieveResponse,
                      ScoredDocModel)


@dataclass
class ServiceState:
    embedder: Embedder
    index: DenseIndex | None = None
    kb_retriever: KBCandidateRetriever | None = None
    policy: QuotaPolicy | None = None


def create_app(state: ServiceState | None = None) -> FastAPI:
    if state is None:
        state = ServiceState(embedder=HashingEmbedder())
    app = FastAPI(title="flatqa", version="0.1.0")
    app.state.flatqa = state

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(
            status="ok",
            dim=state.embedder.dim,
            index_size=len(state.index) if state.index is not None else 0,
        )

    @app.post("/embed", response_model=EmbedResponse)
    def embed(request: EmbedRequest) -> EmbedResponse:
        vectors = state.embedder.embed(request.texts)
        return EmbedResponse(vectors=[row.tolist() for row in vectors])

    @app.post("/read", response_model=ReadResponse)
    def read(request: ReadRequest) -> ReadResponse:
        contexts = tuple(ReaderContext(title=c.title, text=c.text)
                         for c in request.contexts)
        try:
            reader_request = ReaderRequest(question=request.question,
                                           contexts=contexts)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return ReadResponse(answer=read_baseline(reader_request))

    @app.post("/retrieve", response_model=RetrieveResponse)
    def retrieve(request: RetrieveRequest) -> RetrieveResponse:
        if state.index is None:
            raise HTTPException(status_code=503, detail="no index loaded")
        qvec = state.embedder.embed([normalize_question(request.question)])[0]
        docs = search_dense(state.index, qvec, request.k)[0]
        if (request.linked_entities and state.kb_retriever is not None
                and state.policy is not None):
            kb_docs, _ = state.kb_retriever.candidates_for_text(
                request.question, "adhoc", request.linked_entities)
            policy = QuotaPolicy(k_total=request.k,
                                 kb_quota=min(state.policy.kb_quota, request.k))
            docs = merge_quota(docs, kb_docs, policy)
        return RetrieveResponse(results=[
            ScoredDocModel(doc_id=d.doc_id, score=d.score, source=d.source.value)
            for d in docs
        ])

    return app
