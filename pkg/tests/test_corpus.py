import json

import pytest

from flatqa.corpus import (
    CorpusError,
    Passage,
    Question,
    SourceType,
    corpus_index,
    iter_jsonl,
    load_corpus,
    load_questions,
    normalize_question,
    passage_from_dict,
    passage_to_dict,
    question_from_dict,
    question_to_dict,
    tokenize,
    write_corpus,
    write_jsonl_atomic,
    write_text_atomic,
)


def make_passage(pid="p1", text="alpha beta gamma", **kw):
    kw.setdefault("source", SourceType.TEXT)
    kw.setdefault("title", "Title")
    return Passage(id=pid, text=text, **kw)


class TestTokenize:
    def test_simple_split(self):
        assert tokenize("who won 2010") == ["who", "won", "2010"]

    def test_empty(self):
        assert tokenize("") == []

    def test_whitespace_normalization(self):
        assert tokenize("A  B\tC") == ["A", "B", "C"]

    def test_deterministic(self):
        s = "some input\nwith   lines"
        assert tokenize(s) == tokenize(s)

    def test_round_trip_whitespace_normalized(self):
        s = "  padded   and\ttabbed "
        assert " ".join(tokenize(s)) == "padded and tabbed"


class TestNormalizeQuestion:
    def test_lowercase_and_strip_qmark(self):
        assert normalize_question("Who is Natalie Portman?") == "who is natalie portman"

    def test_identity_on_lowercase(self):
        assert normalize_question("already lower") == "already lower"

    def test_inner_qmarks_collapse_spaces(self):
        assert normalize_question("A? B?") == "a b"

    def test_idempotent(self):
        for s in ["Who? What?", "MixedCase no marks", "  spaced  out ? "]:
            once = normalize_question(s)
            assert normalize_question(once) == once


class TestPassage:
    def test_token_count_matches_tokenize(self):
        p = make_passage(text="one two  three")
        assert p.token_count == 3

    def test_rejects_empty_text(self):
        with pytest.raises(ValueError):
            make_passage(text="")

    def test_frozen(self):
        p = make_passage()
        with pytest.raises(AttributeError):
            p.text = "changed"

    def test_dict_round_trip(self):
        p = make_passage(provenance={"table_id": "t1", "rows": [1, 2]})
        assert passage_from_dict(passage_to_dict(p)) == p

    def test_source_serialized_as_string(self):
        d = passage_to_dict(make_passage(source=SourceType.KB))
        assert d["source"] == "kb"
        assert set(d) == {"id", "source", "title", "text", "provenance"}


class TestQuestion:
    def test_requires_answer(self):
        with pytest.raises(ValueError):
            Question(id="q1", text="what", answers=())

    def test_rejects_blank_answers(self):
        with pytest.raises(ValueError):
            Question(id="q1", text="what", answers=("",))

    def test_dict_round_trip(self):
        q = Question(
            id="q1",
            text="who founded acme?",
            answers=("Jane Doe",),
            linked_entities=("e1", "e2"),
            dataset="dev",
        )
        assert question_from_dict(question_to_dict(q)) == q


class TestJsonlIO:
    def test_iter_jsonl_skips_blank_lines(self, tmp_path):
        path = tmp_path / "f.jsonl"
        path.write_text('{"a": 1}\n\n{"b": 2}\n')
        rows = list(iter_jsonl(path))
        assert [obj for _, obj in rows] == [{"a": 1}, {"b": 2}]
        assert [lineno for lineno, _ in rows] == [1, 3]

    def test_iter_jsonl_bad_json_names_line(self, tmp_path):
        path = tmp_path / "f.jsonl"
        path.write_text('{"a": 1}\nnot json\n')
        with pytest.raises(CorpusError) as exc:
            list(iter_jsonl(path))
        assert exc.value.line == 2

    def test_iter_jsonl_non_object(self, tmp_path):
        path = tmp_path / "f.jsonl"
        path.write_text("[1, 2]\n")
        with pytest.raises(CorpusError):
            list(iter_jsonl(path))

    def test_write_jsonl_atomic(self, tmp_path):
        path = tmp_path / "out.jsonl"
        write_jsonl_atomic(path, [{"x": 1}, {"y": 2}])
        lines = path.read_text().splitlines()
        assert [json.loads(s) for s in lines] == [{"x": 1}, {"y": 2}]

    def test_write_text_atomic_replaces(self, tmp_path):
        path = tmp_path / "out.txt"
        write_text_atomic(path, "first")
        write_text_atomic(path, "second")
        assert path.read_text() == "second"


class TestCorpusIO:
    def test_round_trip_order_preserved(self, tmp_path):
        passages = [make_passage(f"p{i}", f"text number {i}") for i in range(3)]
        path = tmp_path / "corpus.jsonl"
        write_corpus(passages, path)
        assert load_corpus(path) == passages

    def test_duplicate_id_on_load(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        rows = [passage_to_dict(make_passage("p1")), passage_to_dict(make_passage("p1"))]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        with pytest.raises(CorpusError) as exc:
            load_corpus(path)
        assert "p1" in str(exc.value)

    def test_duplicate_id_on_write(self, tmp_path):
        with pytest.raises(CorpusError):
            write_corpus([make_passage("p1"), make_passage("p1")], tmp_path / "c.jsonl")

    def test_missing_field_names_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        good = json.dumps(passage_to_dict(make_passage("p1")))
        bad = json.dumps({"id": "p2", "source": "text", "title": "T"})
        path.write_text(good + "\n" + bad + "\n")
        with pytest.raises(CorpusError) as exc:
            load_corpus(path)
        assert exc.value.line == 2

    def test_load_questions_round_trip(self, tmp_path):
        qs = [
            Question(id="q1", text="who", answers=("a",)),
            Question(id="q2", text="what", answers=("b", "c"), dataset="nq"),
        ]
        path = tmp_path / "q.jsonl"
        write_jsonl_atomic(path, [question_to_dict(q) for q in qs])
        assert load_questions(path) == qs

    def test_load_questions_duplicate_id(self, tmp_path):
        q = question_to_dict(Question(id="q1", text="who", answers=("a",)))
        path = tmp_path / "q.jsonl"
        path.write_text(json.dumps(q) + "\n" + json.dumps(q) + "\n")
        with pytest.raises(CorpusError) as exc:
            load_questions(path)
        assert "q1" in str(exc.value)


class TestCorpusIndex:
    def test_maps_ids(self):
        ps = [make_passage("a"), make_passage("b")]
        idx = corpus_index(ps)
        assert idx["a"] is ps[0] and idx["b"] is ps[1]

    def test_rejects_duplicates(self):
        with pytest.raises(CorpusError):
            corpus_index([make_passage("a"), make_passage("a")])
