#!/usr/bin/env python3
"""Generate the hermetic end-to-end fixture under fixtures/e2e/.

50 questions over three source groups: 30 answered in text/list passages
(3 gold passages each), 10 in table rows, 10 only in KB relations reachable
through entity links. Vocabulary is invented per question so that lexical
overlap alone ranks gold passages first; filler words are stop words or
one-off tokens so the baseline reader's vote goes to the answer span.

Also writes expected.json with a brute-force retrieval oracle (full argsort
plus an independent quota-merge reimplementation) so the pipeline's
recall@20 can be pinned exactly.
"""
from __future__ import annotations

import json
import random
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from flatqa.corpus import (Passage, Question, SourceType, normalize_question,
                           passage_to_dict, question_to_dict)
from flatqa.embedder import HashingEmbedder
from flatqa.evaluation import has_answer
from flatqa.kb import (HyperRelation, KBEntity, pack_relations, relation_sentence,
                       relation_to_dict)
from flatqa.tables import Cell, Table, flatten_tables, table_to_dict

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "fixtures" / "e2e"

SYLLABLES = ["ka", "zo", "ri", "ta", "mu", "ve", "lor", "shan", "dri", "pel",
             "quo", "xim", "bar", "neth", "gol", "fy", "ur", "sa", "ble", "cro"]

N_TEXT_Q = 30
N_TABLE_Q = 10
N_KB_Q = 10
N_DISTRACTOR_TEXT = 110
TOKEN_LIMIT = 100
K_TOTAL = 100
KB_QUOTA = 10
EMBED_DIM = 128
SEED = 7


class Vocab:
    def __init__(self, rng: random.Random) -> None:
        self.rng = rng
        self.used: set[str] = set()
        self.serial = 0

    def word(self, n_syll: int = 2) -> str:
        for attempt in range(40):
            extra = attempt // 10  # widen the space if collisions pile up
            w = "".join(self.rng.choice(SYLLABLES)
                        for _ in range(n_syll + extra))
            if w not in self.used:
                self.used.add(w)
                return w
        self.serial += 1
        w = f"{self.rng.choice(SYLLABLES)}{self.serial}"
        self.used.add(w)
        return w

    def name(self) -> str:
        return f"{self.word().capitalize()} {self.word().capitalize()}"


def write_jsonl(path: Path, records) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def main() -> None:
    rng = random.Random(SEED)
    vocab = Vocab(rng)

    questions: list[Question] = []
    text_passages: list[Passage] = []
    tables: list[Table] = []
    relations: list[HyperRelation] = []
    links: dict[str, list[str]] = {}

    # text/list questions: 3 gold passages each, answer token leading
    for i in range(N_TEXT_Q):
        qid = f"q{i + 1}"
        subject = vocab.name()
        rel = vocab.word()
        answer = vocab.word(3).capitalize()
        questions.append(Question(id=qid, text=f"what is the {rel} of {subject}?",
                                  answers=(answer,), dataset="fixture"))
        for j in range(3):
            filler = vocab.word()
            source = SourceType.LIST if (i + j) % 5 == 0 else SourceType.TEXT
            text_passages.append(Passage(
                id=f"text:{qid}:{j}",
                source=source,
                title=subject,
                text=f"{answer} was then the {rel} in {subject} there. so it was {filler}.",
            ))

    # distractor text passages: stop words plus one-off tokens only
    for d in range(N_DISTRACTOR_TEXT):
        subject = vocab.name()
        a, b = vocab.word(), vocab.word()
        source = SourceType.LIST if d % 6 == 0 else SourceType.TEXT
        text_passages.append(Passage(
            id=f"text:dis{d}",
            source=source,
            title=subject,
            text=f"{subject} was just about {a} and {b} there.",
        ))

    # table questions: answer sits in one row of a dedicated table
    for i in range(N_TABLE_Q):
        qid = f"q{N_TEXT_Q + i + 1}"
        subject = vocab.name()
        rel = vocab.word()
        answer = vocab.word(3).capitalize()
        questions.append(Question(id=qid, text=f"what is the {rel} of {subject}?",
                                  answers=(answer,), dataset="fixture"))
        rows = [[Cell("Item"), Cell("Detail"), Cell("Year")],
                [Cell(vocab.word()), Cell(vocab.word()), Cell(str(1900 + i))],
                [Cell(rel), Cell(answer), Cell(str(1950 + i))],
                [Cell(vocab.word()), Cell(vocab.word()), Cell(str(2000 + i))]]
        tables.append(Table(id=f"tab:{qid}", page_title=subject, rows=rows))

    # distractor tables: plain, nested, ragged, service, single-row
    for d in range(6):
        rows = [[Cell("Label"), Cell("Value")]]
        rows += [[Cell(vocab.word()), Cell(vocab.word())] for _ in range(3)]
        tables.append(Table(id=f"tab:dis{d}", page_title=vocab.name(), rows=rows))
    child = Table(id="tab:nested-child", page_title=vocab.name(),
                  rows=[[Cell("Part"), Cell("Code")],
                        [Cell(vocab.word()), Cell(vocab.word())]])
    tables.append(Table(id="tab:nested-parent", page_title=vocab.name(),
                        rows=[[Cell("Section"), Cell("Notes")],
                              [Cell(vocab.word()), Cell(vocab.word())]],
                        nested=[child]))
    tables.append(Table(id="tab:ragged", page_title=vocab.name(),
                        rows=[[Cell(""), Cell("")],
                              [Cell("Heading"), Cell("Extra"), Cell("Wide")],
                              [Cell(vocab.word())]]))
    tables.append(Table(id="tab:service", page_title=vocab.name(),
                        css_class="navbox metadata",
                        rows=[[Cell("Nav"), Cell("Links")],
                              [Cell(vocab.word()), Cell(vocab.word())]]))
    tables.append(Table(id="tab:single", page_title=vocab.name(),
                        rows=[[Cell("Lonely"), Cell("Row")]]))

    # KB questions: the answer exists only as a relation object
    kb_rel_words = []
    for i in range(N_KB_Q):
        qid = f"q{N_TEXT_Q + N_TABLE_Q + i + 1}"
        subject_name = vocab.name()
        subject = KBEntity(id=f"ent:{qid}:subj", surface=subject_name)
        rel = vocab.word()
        kb_rel_words.append(rel)
        answer = vocab.word(3).capitalize()
        questions.append(Question(id=qid, text=f"what is the {rel} of {subject_name}?",
                                  answers=(answer,), dataset="fixture"))
        links[qid] = [subject.id]
        relations.append(HyperRelation(
            subject=subject,
            primary=(rel, KBEntity(id=f"ent:{qid}:ans", surface=answer))))
        # neighborhood: plain relation, a literal, and a qualified relation
        n1 = KBEntity(id=f"ent:{qid}:n1", surface=vocab.name())
        n2 = KBEntity(id=f"ent:{qid}:n2", surface=vocab.name())
        relations.append(HyperRelation(subject=subject,
                                       primary=(vocab.word(), n1)))
        relations.append(HyperRelation(subject=subject,
                                       primary=(vocab.word(), str(1800 + i))))
        relations.append(HyperRelation(
            subject=n1,
            primary=(vocab.word(), n2),
            qualifiers=((vocab.word(), str(1900 + i)),)))
        relations.append(HyperRelation(subject=n2,
                                       primary=(vocab.word(), vocab.word())))

    # distractor relations in an unlinked component
    for d in range(100 - len(relations)):
        relations.append(HyperRelation(
            subject=KBEntity(id=f"ent:dis{d}", surface=vocab.name()),
            primary=(vocab.word(), KBEntity(id=f"ent:dis{d}b", surface=vocab.name()))))

    assert len(relations) == 100, len(relations)
    assert len(questions) == 50, len(questions)
    assert len(text_passages) == N_TEXT_Q * 3 + N_DISTRACTOR_TEXT

    write_jsonl(OUT / "text.jsonl", (passage_to_dict(p) for p in text_passages))
    write_jsonl(OUT / "tables.jsonl", (table_to_dict(t) for t in tables))
    write_jsonl(OUT / "kb.jsonl", (relation_to_dict(r) for r in relations))
    write_jsonl(OUT / "questions.jsonl", (question_to_dict(q) for q in questions))
    write_jsonl(OUT / "links.jsonl",
                ({"question_id": qid, "entities": ents}
                 for qid, ents in sorted(links.items())))

    config = f"""\
kb_path: fixtures/e2e/kb.jsonl
tables_path: fixtures/e2e/tables.jsonl
text_path: fixtures/e2e/text.jsonl
questions_path: fixtures/e2e/questions.jsonl
linking_path: fixtures/e2e/links.jsonl
output_dir: out/e2e
token_limit: {TOKEN_LIMIT}
k_total: {K_TOTAL}
kb_quota: {KB_QUOTA}
embed_dim: {EMBED_DIM}
read_contexts: 20
seed: {SEED}
"""
    (OUT / "config.yaml").write_text(config, encoding="utf-8")

    oracle = brute_force_oracle(text_passages, tables, relations, questions, links)
    write_jsonl(OUT / "expected.json", [oracle])
    # single-record file; rewrite as a plain JSON document
    (OUT / "expected.json").write_text(
        json.dumps(oracle, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(oracle, indent=2, sort_keys=True))


def brute_force_oracle(text_passages, tables, relations, questions, links) -> dict:
    """Recompute recall@20/@100 with full sorts and a re-derived merge."""
    table_passages, _ = flatten_tables(tables, TOKEN_LIMIT, "simple")
    corpus = list(text_passages) + table_passages
    by_id = {p.id: p for p in corpus}

    emb = HashingEmbedder(dim=EMBED_DIM)
    doc_matrix = emb.embed([f"{p.title} {p.text}" if p.title else p.text
                            for p in corpus])

    # independent 2-hop: BFS over an adjacency map built from scratch
    adjacency: dict[str, list[HyperRelation]] = {}
    for r in relations:
        for ent in {r.subject.id, *(o.id for _, o in (r.primary, *r.qualifiers)
                                    if isinstance(o, KBEntity))}:
            adjacency.setdefault(ent, []).append(r)

    def two_hop(seeds):
        hop1 = [r for s in seeds for r in adjacency.get(s, [])]
        reachable = set(seeds)
        for r in hop1:
            reachable.add(r.subject.id)
            for _, obj in (r.primary, *r.qualifiers):
                if isinstance(obj, KBEntity):
                    reachable.add(obj.id)
        out = {}
        for ent in reachable:
            for r in adjacency.get(ent, []):
                out[r.relation_id] = r
        return list(out.values())

    hits20 = hits100 = 0
    for q in questions:
        qvec = emb.embed([normalize_question(q.text)])[0]
        scores = doc_matrix @ qvec
        order = sorted(range(len(corpus)),
                       key=lambda i: (-scores[i], corpus[i].id))
        main = [(corpus[i].id, float(scores[i])) for i in order[:K_TOTAL]]

        kb_docs = []
        hood = two_hop(links.get(q.id, []))
        if hood:
            sentences = sorted((relation_sentence(r) for r in hood),
                               key=lambda s: s.relation_id)
            svecs = emb.embed([s.text for s in sentences])
            sscores = svecs @ qvec
            rel_order = sorted(range(len(sentences)),
                               key=lambda i: (-sscores[i], sentences[i].relation_id))
            top = rel_order[:K_TOTAL]
            ranked = [sentences[i] for i in top]
            score_by_rel = {sentences[i].relation_id: float(sscores[i]) for i in top}
            for p in pack_relations(ranked, TOKEN_LIMIT, id_prefix=f"kb:{q.id}"):
                by_id[p.id] = p
                kb_docs.append((p.id, max(score_by_rel[rid]
                                          for rid in p.provenance["relation_ids"])))
            kb_docs.sort(key=lambda t: (-t[1], t[0]))

        merged = dict(kb_docs[:KB_QUOTA])
        for doc_id, score in main:
            if len(merged) >= K_TOTAL:
                break
            merged.setdefault(doc_id, score)
        for doc_id, score in kb_docs[KB_QUOTA:]:
            if len(merged) >= K_TOTAL:
                break
            merged.setdefault(doc_id, score)
        final = sorted(merged.items(), key=lambda t: (-t[1], t[0]))

        def bearing(prefix):
            return any(has_answer(by_id[d].text, q.answers) for d, _ in prefix)

        hits20 += bearing(final[:20])
        hits100 += bearing(final[:100])

    return {
        "recall_at_20": hits20 / len(questions),
        "recall_at_100": hits100 / len(questions),
        "n_questions": len(questions),
    }


if __name__ == "__main__":
    main()
