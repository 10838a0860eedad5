"""Command implementations behind the CLI: each function composes exported
module operations, reads and writes the documented file formats atomically,
and stays deterministic for a fixed config and seed."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .bm25 import Bm25Index, build_bm25_index, search_bm25
from .config import PipelineConfig
from .corpus import (Passage, Question, corpus_index, load_corpus, load_questions,
                     normalize_question, write_corpus, write_text_atomic)
from .dense import DenseIndex, build_dense_index, search_dense
from .embedder import Embedder, HashingEmbedder, RemoteEmbedder
from .evaluation import (Metrics, exact_match, format_metrics, load_predictions,
                         recall_at_k, source_attribution, write_predictions)
from .fusion import (KBCandidateRetriever, QuotaPolicy, RetrievalResult,
                     load_results, merge_quota, tune_quota, write_results)
from .html_tables import parse_html_tables
from .kb import (KBGraph, load_entity_links, load_relations, pack_relations,
                 relation_sentence)
from .reader import (DEFAULT_CONTEXT_LIMIT, ReaderContext, ReaderRequest,
                     RemoteReader, read_baseline)
from .tables import flatten_tables, load_tables, write_tables
from .trainset import (build_samples_bm25, load_samples, mine_iterative_negatives,
                       mix_datasets, write_samples)

logger = logging.getLogger(__name__)

RECALL_KS = (1, 5, 10, 20, 50, 100)


class MissingInputError(FileNotFoundError):
    def __init__(self, path: str | Path, what: str = "input") -> None:
        super().__init__(f"missing {what}: {path}")
        self.path = str(path)


def _require(path: str | Path, what: str = "input") -> Path:
    p = Path(path)
    if not str(path) or not p.exists():
        raise MissingInputError(path, what)
    return p


def make_embedder(cfg: PipelineConfig) -> Embedder:
    if cfg.embedder == "stub":
        return HashingEmbedder(dim=cfg.embed_dim)
    if cfg.embedder == "remote":
        if not cfg.embed_endpoint:
            raise ValueError("embedder 'remote' requires embed_endpoint")
        return RemoteEmbedder(cfg.embed_endpoint, dim=cfg.embed_dim)
    raise ValueError(f"unknown embedder {cfg.embedder!r}")


def make_reader(cfg: PipelineConfig) -> Callable[[ReaderRequest], str]:
    if cfg.reader == "baseline":
        return read_baseline
    if cfg.reader == "remote":
        if not cfg.reader_endpoint:
            raise ValueError("reader 'remote' requires reader_endpoint")
        return RemoteReader(cfg.reader_endpoint).read
    raise ValueError(f"unknown reader {cfg.reader!r}")


def cmd_flatten_kb(input_path: str, output_path: str, token_limit: int) -> dict:
    relations = load_relations(_require(input_path, "KB relations file"))
    if not relations:
        logger.warning("no relations in %s; writing an empty corpus", input_path)
    sentences = [relation_sentence(r) for r in relations]
    passages = pack_relations(sentences, token_limit)
    write_corpus(passages, output_path)
    return {"relations": len(relations), "passages": len(passages)}


def cmd_flatten_tables(input_path: str, output_path: str, token_limit: int,
                       mode: str = "simple") -> dict:
    tables = load_tables(_require(input_path, "tables file"))
    passages, stats = flatten_tables(tables, token_limit, mode)
    write_corpus(passages, output_path)
    stats["passages"] = len(passages)
    return stats


def cmd_import_html_tables(input_path: str, output_path: str) -> dict:
    root = _require(input_path, "HTML file or directory")
    files = sorted(root.glob("*.html")) if root.is_dir() else [root]
    if not files:
        raise MissingInputError(input_path, "HTML file (none found)")
    tables = []
    for f in files:
        page_id = f.stem
        title = f.stem.replace("_", " ")
        tables.extend(parse_html_tables(f.read_text(encoding="utf-8"), page_id, title))
    write_tables(tables, output_path)
    return {"pages": len(files), "tables": len(tables)}


def _load_corpora(paths: Sequence[str]) -> list[Passage]:
    passages: list[Passage] = []
    seen: set[str] = set()
    for path in paths:
        for p in load_corpus(_require(path, "corpus file")):
            if p.id in seen:
                raise ValueError(f"duplicate passage id {p.id!r} across corpora")
            seen.add(p.id)
            passages.append(p)
    return passages


def cmd_build_index(kind: str, corpus_paths: Sequence[str], output_path: str,
                    cfg: PipelineConfig) -> dict:
    passages = _load_corpora(corpus_paths)
    if kind in ("dense", "joint"):
        index = build_dense_index(passages, make_embedder(cfg))
        index.save(output_path)
    elif kind == "bm25":
        index = build_bm25_index(passages, k1=cfg.bm25_k1, b=cfg.bm25_b)
        index.save(output_path)
    else:
        raise ValueError(f"unknown index kind {kind!r}")
    return {"kind": kind, "docs": len(passages)}


def _embed_questions(embedder: Embedder, questions: Sequence[Question]) -> np.ndarray:
    return embedder.embed([normalize_question(q.text) for q in questions])


def make_kb_retriever(cfg: PipelineConfig, embedder: Embedder) -> KBCandidateRetriever:
    relations = load_relations(_require(cfg.kb_path, "KB relations file"))
    return KBCandidateRetriever(graph=KBGraph(relations), embedder=embedder,
                                k_relations=cfg.kb_k_relations,
                                token_limit=cfg.token_limit)


def _linked_entities(cfg: PipelineConfig,
                     questions: Sequence[Question]) -> dict[str, list[str]]:
    if cfg.linking_path:
        return load_entity_links(_require(cfg.linking_path, "entity links file"))
    return {q.id: list(q.linked_entities) for q in questions}


def cmd_retrieve(mode: str, cfg: PipelineConfig, index_path: str,
                 questions_path: str, output_path: str,
                 kb_passages_path: str | None = None) -> dict:
    questions = load_questions(_require(questions_path, "questions file"))
    index = DenseIndex.load(_require(index_path, "dense index"))
    embedder = make_embedder(cfg)
    queries = _embed_questions(embedder, questions)
    main_lists = search_dense(index, queries, cfg.k_total) if questions else []

    results: list[RetrievalResult] = []
    kb_passages: list[Passage] = []
    if mode == "joint":
        results = [RetrievalResult(question_id=q.id, results=docs)
                   for q, docs in zip(questions, main_lists)]
    elif mode == "quota":
        retriever = make_kb_retriever(cfg, embedder)
        links = _linked_entities(cfg, questions)
        policy = QuotaPolicy(k_total=cfg.k_total, kb_quota=cfg.kb_quota)
        for q, main in zip(questions, main_lists):
            docs, passages = retriever.candidates_for_text(
                q.text, q.id, links.get(q.id, ()))
            results.append(RetrievalResult(
                question_id=q.id, results=merge_quota(main, docs, policy)))
            kb_passages.extend(passages)
    else:
        raise ValueError(f"unknown retrieve mode {mode!r}")

    write_results(results, output_path)
    if mode == "quota" and kb_passages_path:
        write_corpus(kb_passages, kb_passages_path)
    return {"questions": len(questions), "kb_passages": len(kb_passages)}


def cmd_tune_quota(cfg: PipelineConfig, index_path: str, questions_path: str,
                   corpus_paths: Sequence[str], output_path: str,
                   candidate_quotas: Sequence[int]) -> dict:
    questions = load_questions(_require(questions_path, "questions file"))
    index = DenseIndex.load(_require(index_path, "dense index"))
    embedder = make_embedder(cfg)
    retriever = make_kb_retriever(cfg, embedder)
    links = _linked_entities(cfg, questions)

    passages_by_id = corpus_index(_load_corpora(corpus_paths))

    def kb_fn(q: Question):
        docs, passages = retriever.candidates_for_text(q.text, q.id,
                                                       links.get(q.id, ()))
        for p in passages:
            passages_by_id[p.id] = p
        return docs

    policy, table = tune_quota(questions, index, embedder, kb_fn,
                               passages_by_id, candidate_quotas, cfg.k_total)
    payload = {"k_total": policy.k_total, "kb_quota": policy.kb_quota,
               "recall_by_quota": {str(k): v for k, v in sorted(table.items())}}
    write_text_atomic(output_path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return payload


def cmd_build_trainset(cfg: PipelineConfig, questions_path: str,
                       corpus_paths: Sequence[str], bm25_path: str,
                       output_path: str, tables_path: str | None = None) -> dict:
    questions = load_questions(_require(questions_path, "questions file"))
    passages_by_id = corpus_index(_load_corpora(corpus_paths))
    index = Bm25Index.load(_require(bm25_path, "bm25 index"))
    tables_by_id = None
    if tables_path:
        tables_by_id = {t.id: t for t in load_tables(_require(tables_path, "tables file"))}
    samples, stats = build_samples_bm25(
        questions, passages_by_id, index,
        negatives_per_q=cfg.negatives_per_q,
        candidate_depth=cfg.candidate_depth,
        tables_by_id=tables_by_id,
        token_limit=cfg.token_limit,
        seed=cfg.seed)
    write_samples(samples, output_path)
    return stats.to_dict()


def cmd_mine_negatives(cfg: PipelineConfig, samples_path: str,
                       corpus_paths: Sequence[str], bm25_path: str,
                       output_path: str) -> dict:
    samples = load_samples(_require(samples_path, "training samples file"))
    passages_by_id = corpus_index(_load_corpora(corpus_paths))
    index = Bm25Index.load(_require(bm25_path, "bm25 index"))

    def retriever(question_text: str) -> list[str]:
        return [d.doc_id for d in search_bm25(index, question_text,
                                              cfg.candidate_depth)]

    mined, history = mine_iterative_negatives(
        samples, retriever, passages_by_id,
        round_count=cfg.mining_rounds, negatives_per_q=cfg.negatives_per_q)
    write_samples(mined, output_path)
    return {"rounds": [h.to_dict() for h in history]}


def cmd_mix(streams: Sequence[tuple[str, str, int]], output_path: str,
            seed: int) -> dict:
    loaded = [(tag, load_samples(_require(path, f"samples for {tag!r}")), factor)
              for tag, path, factor in streams]
    mixed, counts = mix_datasets(loaded, seed=seed)
    write_samples(mixed, output_path)
    return {"total": len(mixed), "counts": counts}


def _contexts_for(result: RetrievalResult, passages_by_id: Mapping[str, Passage],
                  limit: int) -> tuple[ReaderContext, ...]:
    contexts = []
    for doc in result.results[:limit]:
        p = passages_by_id.get(doc.doc_id)
        if p is None:
            raise KeyError(f"retrieved doc id {doc.doc_id!r} not in the corpus")
        contexts.append(ReaderContext(title=p.title, text=p.text))
    return tuple(contexts)


def cmd_read(cfg: PipelineConfig, results_path: str, corpus_paths: Sequence[str],
             questions_path: str, output_path: str,
             contexts: int | None = None) -> dict:
    results = load_results(_require(results_path, "retrieval results file"))
    questions = {q.id: q for q in
                 load_questions(_require(questions_path, "questions file"))}
    passages_by_id = corpus_index(_load_corpora(corpus_paths))
    reader = make_reader(cfg)
    limit = min(contexts or cfg.read_contexts, DEFAULT_CONTEXT_LIMIT)

    predictions: dict[str, str] = {}
    for result in results:
        q = questions.get(result.question_id)
        if q is None:
            raise ValueError(f"unknown question id {result.question_id!r} in results")
        request = ReaderRequest(
            question=q.text,
            contexts=_contexts_for(result, passages_by_id, limit))
        predictions[q.id] = reader(request)
    write_predictions(predictions, output_path)
    return {"predictions": len(predictions)}


def cmd_eval_recall(results_path: str, questions_path: str,
                    corpus_paths: Sequence[str], output_path: str | None,
                    ks: Sequence[int] = RECALL_KS) -> Metrics:
    results = load_results(_require(results_path, "retrieval results file"))
    questions = load_questions(_require(questions_path, "questions file"))
    passages_by_id = corpus_index(_load_corpora(corpus_paths))
    metrics = recall_at_k(results, questions, ks, passages_by_id)
    if output_path:
        write_text_atomic(output_path,
                          json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n")
    return metrics


def cmd_eval_em(predictions_path: str, questions_path: str,
                output_path: str | None) -> Metrics:
    predictions = load_predictions(_require(predictions_path, "predictions file"))
    questions = load_questions(_require(questions_path, "questions file"))
    metrics = exact_match(predictions, questions)
    if output_path:
        write_text_atomic(output_path,
                          json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n")
    return metrics


def cmd_eval_attribution(results_a_path: str, results_b_path: str,
                         predictions_a_path: str, predictions_b_path: str,
                         questions_path: str, corpus_paths: Sequence[str],
                         output_path: str | None) -> dict:
    report = source_attribution(
        load_results(_require(results_a_path, "baseline results file")),
        load_results(_require(results_b_path, "candidate results file")),
        load_predictions(_require(predictions_a_path, "baseline predictions file")),
        load_predictions(_require(predictions_b_path, "candidate predictions file")),
        load_questions(_require(questions_path, "questions file")),
        corpus_index(_load_corpora(corpus_paths)),
    )
    payload = report.to_dict()
    if output_path:
        write_text_atomic(output_path,
                          json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return payload


def cmd_e2e(cfg: PipelineConfig) -> dict:
    """Full hermetic pipeline: flatten tables, join with the text corpus,
    build the dense index, retrieve with the KB quota merge, read with the
    configured reader, and evaluate recall and exact match."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    text_passages = load_corpus(_require(cfg.text_path, "text corpus"))
    tables = load_tables(_require(cfg.tables_path, "tables file"))
    table_passages, table_stats = flatten_tables(tables, cfg.token_limit,
                                                 cfg.table_mode)
    corpus = text_passages + table_passages
    write_corpus(corpus, out / "corpus.jsonl")

    embedder = make_embedder(cfg)
    index = build_dense_index(corpus, embedder)
    index.save(out / "dense.hfdi")

    questions = load_questions(_require(cfg.questions_path, "questions file"))
    queries = _embed_questions(embedder, questions)
    main_lists = search_dense(index, queries, cfg.k_total) if questions else []

    retriever = make_kb_retriever(cfg, embedder)
    links = _linked_entities(cfg, questions)
    policy = QuotaPolicy(k_total=cfg.k_total, kb_quota=cfg.kb_quota)
    results: list[RetrievalResult] = []
    kb_passages: list[Passage] = []
    for q, main in zip(questions, main_lists):
        docs, passages = retriever.candidates_for_text(q.text, q.id,
                                                       links.get(q.id, ()))
        results.append(RetrievalResult(question_id=q.id,
                                       results=merge_quota(main, docs, policy)))
        kb_passages.extend(passages)
    write_results(results, out / "results.jsonl")
    write_corpus(kb_passages, out / "kb_passages.jsonl")

    passages_by_id = corpus_index(corpus)
    for p in kb_passages:
        passages_by_id[p.id] = p

    reader = make_reader(cfg)
    limit = min(cfg.read_contexts, DEFAULT_CONTEXT_LIMIT)
    by_qid = {q.id: q for q in questions}
    predictions = {
        r.question_id: reader(ReaderRequest(
            question=by_qid[r.question_id].text,
            contexts=_contexts_for(r, passages_by_id, limit)))
        for r in results
    }
    write_predictions(predictions, out / "predictions.jsonl")

    recall = recall_at_k(results, questions, RECALL_KS, passages_by_id)
    em = exact_match(predictions, questions)
    metrics = {
        "n_questions": len(questions),
        "recall_at": {str(k): v for k, v in sorted(recall.recall_at.items())},
        "exact_match": em.exact_match,
        "hits_at_1": em.hits_at_1,
        "table_stats": table_stats,
    }
    write_text_atomic(out / "metrics.json",
                      json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    write_text_atomic(out / "config.yaml", cfg.to_yaml())
    print(format_metrics(Metrics(recall_at=recall.recall_at,
                                 exact_match=em.exact_match,
                                 hits_at_1=em.hits_at_1,
                                 n_questions=len(questions))))
    return metrics
