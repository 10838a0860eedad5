"""flatqa: flatten KBs, tables, and lists into a uniform passage corpus,
retrieve over it (dense + BM25 + quota fusion), build retriever training
data, and evaluate QA answers."""

from .bm25 import Bm25Index, build_bm25_index, search_bm25
from .config import PipelineConfig, apply_overrides, load_config
from .corpus import (CorpusError, Passage, Question, SourceType, load_corpus,
                     load_questions, normalize_question, tokenize, write_corpus,
                     write_questions)
from .dense import (DenseIndex, ScoredDoc, build_dense_index,
                    passage_embedding_text, search_dense)
from .embedder import Embedder, EmbeddingError, HashingEmbedder, RemoteEmbedder
from .evaluation import (AttributionReport, Metrics, exact_match, has_answer,
                         normalize_answer, recall_at_k, source_attribution)
from .fusion import (KBCandidateRetriever, QuotaPolicy, RetrievalResult,
                     kb_candidates_for_question, merge_quota, retrieve_joint,
                     tune_quota)
from .kb import (HyperRelation, KBEntity, KBGraph, KBTriple, linearize_hyper_relation,
                 linearize_triple, pack_relations, two_hop_neighborhood)
from .reader import (ReaderContext, ReaderRequest, RemoteReader, read_baseline,
                     read_remote)
from .tables import (Cell, Table, TableChunk, chunk_table, extract_tables,
                     filter_tables, find_header, flatten_tables, linearize_simple,
                     linearize_template, sample_positive_chunk)
from .trainset import (TrainingSample, build_samples_bm25, mine_iterative_negatives,
                       mix_datasets)

__version__ = "0.1.0"

__all__ = [
    "AttributionReport", "Bm25Index", "Cell", "CorpusError", "DenseIndex",
    "Embedder", "EmbeddingError", "HashingEmbedder", "HyperRelation",
    "KBCandidateRetriever", "KBEntity", "KBGraph", "KBTriple", "Metrics",
    "Passage", "PipelineConfig", "Question", "QuotaPolicy", "ReaderContext",
    "ReaderRequest", "RemoteEmbedder", "RemoteReader", "RetrievalResult",
    "ScoredDoc", "SourceType", "Table", "TableChunk", "TrainingSample",
    "apply_overrides", "build_bm25_index", "build_dense_index",
    "build_samples_bm25", "chunk_table", "exact_match", "extract_tables",
    "filter_tables", "find_header", "flatten_tables", "has_answer",
    "kb_candidates_for_question", "linearize_hyper_relation", "linearize_simple",
    "linearize_template", "linearize_triple", "load_config", "load_corpus",
    "load_questions", "merge_quota", "mine_iterative_negatives", "mix_datasets",
    "normalize_answer", "normalize_question", "pack_relations",
    "passage_embedding_text", "read_baseline", "read_remote", "recall_at_k",
    "retrieve_joint", "sample_positive_chunk", "search_bm25", "search_dense",
    "source_attribution", "tokenize", "tune_quota", "two_hop_neighborhood",
    "write_corpus", "write_questions",
]
