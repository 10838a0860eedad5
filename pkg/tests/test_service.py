import pytest
from fastapi.testclient import TestClient

from flatqa.corpus import Passage, SourceType
from flatqa.dense import build_dense_index
from flatqa.embedder import HashingEmbedder
from flatqa.fusion import KBCandidateRetriever, QuotaPolicy
from flatqa.kb import HyperRelation, KBEntity, KBGraph
from flatqa.service import ServiceState, create_app


def make_client(state=None):
    return TestClient(create_app(state))


def corpus_state(dim=32):
    e = HashingEmbedder(dim=dim)
    passages = [
        Passage(id=f"p{i}", source=SourceType.TEXT, title=f"T{i}",
                text=f"marker{i} some shared words")
        for i in range(5)
    ]
    index = build_dense_index(passages, e)
    return ServiceState(embedder=e, index=index), passages


class TestHealth:
    def test_reports_dim_and_size(self):
        state, _ = corpus_state(dim=16)
        with make_client(state) as client:
            r = client.get("/health")
        assert r.status_code == 200
        body = r.json()
        assert body == {"status": "ok", "dim": 16, "index_size": 5}

    def test_default_stub_state(self):
        with make_client() as client:
            r = client.get("/health")
        assert r.status_code == 200
        assert r.json()["index_size"] == 0


class TestEmbed:
    def test_wire_protocol(self):
        with make_client() as client:
            r = client.post("/embed", json={"texts": ["hello world", ""]})
        assert r.status_code == 200
        vectors = r.json()["vectors"]
        assert len(vectors) == 2
        assert len(vectors[0]) == 128

    def test_matches_local_embedder(self):
        state, _ = corpus_state(dim=8)
        with make_client(state) as client:
            r = client.post("/embed", json={"texts": ["alpha beta"]})
        local = HashingEmbedder(dim=8).embed(["alpha beta"])[0]
        assert r.json()["vectors"][0] == pytest.approx(local.tolist())


class TestRead:
    def test_baseline_answer(self):
        with make_client() as client:
            r = client.post("/read", json={
                "question": "what is the capital",
                "contexts": [
                    {"title": "", "text": "tripoli is the talked capital"},
                    {"title": "", "text": "tripoli remains their capital"},
                ],
            })
        assert r.status_code == 200
        assert r.json()["answer"] == "tripoli"

    def test_context_limit_http_422(self):
        contexts = [{"title": "", "text": f"text {i}"} for i in range(101)]
        with make_client() as client:
            r = client.post("/read", json={"question": "q", "contexts": contexts})
        assert r.status_code == 422

    def test_empty_contexts_empty_answer(self):
        with make_client() as client:
            r = client.post("/read", json={"question": "q", "contexts": []})
        assert r.status_code == 200
        assert r.json()["answer"] == ""


class TestRetrieve:
    def test_joint_retrieval(self):
        state, passages = corpus_state()
        with make_client(state) as client:
            r = client.post("/retrieve", json={"question": "marker3 words", "k": 2})
        assert r.status_code == 200
        results = r.json()["results"]
        assert len(results) == 2
        assert results[0]["doc_id"] == "p3"
        assert set(results[0]) == {"doc_id", "score", "source"}

    def test_no_index_503(self):
        state = ServiceState(embedder=HashingEmbedder(dim=8))
        with make_client(state) as client:
            r = client.post("/retrieve", json={"question": "x", "k": 5})
        assert r.status_code == 503

    def test_k_validated_by_schema(self):
        state, _ = corpus_state()
        with make_client(state) as client:
            r = client.post("/retrieve", json={"question": "x", "k": 0})
        assert r.status_code == 422

    def test_quota_path_adds_kb_docs(self):
        e = HashingEmbedder(dim=32)
        passages = [
            Passage(id=f"p{i}", source=SourceType.TEXT, title="",
                    text=f"noise{i} words")
            for i in range(4)
        ]
        index = build_dense_index(passages, e)
        graph = KBGraph([HyperRelation(
            KBEntity("e0", "Subject"), ("relates to", KBEntity("e1", "Target")))])
        state = ServiceState(
            embedder=e,
            index=index,
            kb_retriever=KBCandidateRetriever(graph=graph, embedder=e),
            policy=QuotaPolicy(k_total=100, kb_quota=10),
        )
        with make_client(state) as client:
            r = client.post("/retrieve", json={
                "question": "subject relates",
                "k": 3,
                "linked_entities": ["e0"],
            })
        assert r.status_code == 200
        sources = [d["source"] for d in r.json()["results"]]
        assert "kb" in sources
        assert len(r.json()["results"]) == 3

    def test_quota_ignored_without_entities(self):
        state, _ = corpus_state()
        with make_client(state) as client:
            r = client.post("/retrieve", json={"question": "marker1", "k": 2})
        sources = {d["source"] for d in r.json()["results"]}
        assert sources == {"text"}
