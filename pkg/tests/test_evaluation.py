import pytest

from flatqa.corpus import Passage, Question, SourceType
from flatqa.dense import ScoredDoc
from flatqa.evaluation import (
    exact_match,
    format_metrics,
    has_answer,
    load_predictions,
    normalize_answer,
    recall_at_k,
    source_attribution,
    write_predictions,
)
from flatqa.fusion import RetrievalResult


def passage(pid, text, source=SourceType.TEXT):
    return Passage(id=pid, source=source, title="", text=text)


def question(qid, answers, text="q"):
    return Question(id=qid, text=text, answers=tuple(answers))


def result(qid, *docs):
    return RetrievalResult(qid, [
        ScoredDoc(doc_id=d, score=1.0 / (i + 1), source=s)
        for i, (d, s) in enumerate(docs)
    ])


class TestNormalizeAnswer:
    def test_rules(self):
        assert normalize_answer("The Lord of the Rings!") == "lord of rings"
        assert normalize_answer("  A  Cat ") == "cat"
        assert normalize_answer("U.S.A.") == "usa"

    def test_idempotent(self):
        for s in ["The Answer?", "miXed CASE", "a an the", "1,234.5"]:
            once = normalize_answer(s)
            assert normalize_answer(once) == once

    def test_article_only_inside_words_kept(self):
        # "the" inside "theory" must survive article stripping
        assert normalize_answer("theory") == "theory"


class TestHasAnswer:
    def test_token_level_no_substring(self):
        assert not has_answer("the partition of india", ["art"])
        assert has_answer("modern art galleries", ["art"])

    def test_multi_token_answer(self):
        assert has_answer("born in New York City today", ["new york city"])
        assert not has_answer("new mexico and york", ["new york"])

    def test_normalization_applied(self):
        assert has_answer("He said: 'The Beatles!'", ["beatles"])

    def test_empty_text(self):
        assert not has_answer("", ["x"])


class TestRecallAtK:
    def case(self):
        passages = {
            "hit": passage("hit", "the answer gold is here"),
            "miss1": passage("miss1", "nothing useful"),
            "miss2": passage("miss2", "still nothing"),
        }
        questions = [question("q1", ["gold"]), question("q2", ["gold"])]
        results = [
            result("q1", ("miss1", SourceType.TEXT), ("hit", SourceType.TEXT)),
            result("q2", ("miss1", SourceType.TEXT), ("miss2", SourceType.TEXT)),
        ]
        return passages, questions, results

    def test_hand_computed(self):
        passages, questions, results = self.case()
        m = recall_at_k(results, questions, ks=[1, 2], passages_by_id=passages)
        assert m.recall_at == {1: 0.0, 2: 0.5}
        assert m.n_questions == 2

    def test_monotone_in_k(self):
        passages, questions, results = self.case()
        m = recall_at_k(results, questions, ks=[1, 2, 5, 10], passages_by_id=passages)
        vals = [m.recall_at[k] for k in (1, 2, 5, 10)]
        assert vals == sorted(vals)

    def test_missing_question_counts_as_miss(self):
        passages, questions, results = self.case()
        m = recall_at_k(results[:1], questions, ks=[2], passages_by_id=passages)
        assert m.recall_at[2] == 0.5

    def test_unknown_question_id_rejected(self):
        passages, questions, _ = self.case()
        bad = [result("ghost", ("hit", SourceType.TEXT))]
        with pytest.raises(ValueError, match="ghost"):
            recall_at_k(bad, questions, ks=[1], passages_by_id=passages)

    def test_unknown_doc_id_rejected(self):
        passages, questions, _ = self.case()
        bad = [result("q1", ("nodoc", SourceType.TEXT))]
        with pytest.raises(KeyError, match="nodoc"):
            recall_at_k(bad, questions, ks=[1], passages_by_id=passages)

    def test_k_validated(self):
        passages, questions, results = self.case()
        with pytest.raises(ValueError):
            recall_at_k(results, questions, ks=[0], passages_by_id=passages)


class TestExactMatch:
    def test_normalized_comparison(self):
        gold = [question("q1", ["The Beatles"]), question("q2", ["42"])]
        preds = {"q1": "beatles!", "q2": "41"}
        m = exact_match(preds, gold)
        assert m.exact_match == 0.5
        assert m.hits_at_1 == 0.5
        assert m.n_questions == 2

    def test_missing_and_empty_predictions_wrong(self):
        gold = [question("q1", ["x"]), question("q2", ["y"])]
        m = exact_match({"q2": "   "}, gold)
        assert m.exact_match == 0.0

    def test_any_gold_answer_counts(self):
        gold = [question("q1", ["Alpha", "Beta"])]
        assert exact_match({"q1": "beta"}, gold).exact_match == 1.0

    def test_empty_gold_set(self):
        assert exact_match({}, []).exact_match == 0.0


class TestAttribution:
    def case(self):
        passages = {
            "txt": passage("txt", "the gold answer in text", SourceType.TEXT),
            "tab": passage("tab", "Name Year\ngold 1990", SourceType.TABLE),
            "kb": passage("kb", "Subject relation gold.", SourceType.KB),
            "noise": passage("noise", "nothing here", SourceType.TEXT),
        }
        gold = [question("q1", ["gold"]), question("q2", ["gold"])]
        # baseline system: text-only retrieval, no correct answers
        results_a = [
            result("q1", ("txt", SourceType.TEXT), ("noise", SourceType.TEXT)),
            result("q2", ("noise", SourceType.TEXT)),
        ]
        # candidate system: adds table/kb sources; q2 becomes correct
        results_b = [
            result("q1", ("txt", SourceType.TEXT), ("noise", SourceType.TEXT)),
            result("q2", ("tab", SourceType.TABLE), ("kb", SourceType.KB)),
        ]
        preds_a = {"q1": "wrong", "q2": "wrong"}
        preds_b = {"q1": "wrong", "q2": "gold"}
        return passages, gold, results_a, results_b, preds_a, preds_b

    def test_improvement_set_fractions(self):
        passages, gold, ra, rb, pa, pb = self.case()
        report = source_attribution(ra, rb, pa, pb, gold, passages)
        assert report.n_questions == 2
        assert report.n_improvement == 1
        assert report.degenerate is False
        # full set: table bearing for q2 only -> 0.5; improvement set {q2} -> 1.0
        assert report.full_set["table"] == 0.5
        assert report.improvement_set["table"] == 1.0
        assert report.improvement_set["table"] > report.full_set["table"]
        assert report.improvement_set["text"] == 0.0

    def test_degenerate_when_no_improvement(self):
        passages, gold, ra, rb, pa, _ = self.case()
        report = source_attribution(ra, rb, pa, dict(pa), gold, passages)
        assert report.degenerate is True
        assert report.n_improvement == 0
        assert all(v == 0.0 for v in report.improvement_set.values())

    def test_question_set_mismatch_rejected(self):
        passages, gold, ra, rb, pa, pb = self.case()
        with pytest.raises(ValueError, match="candidate"):
            source_attribution(ra, rb[:1], pa, pb, gold, passages)


class TestFormatAndIO:
    def test_format_metrics_lines(self):
        m = recall_at_k([], [], ks=[], passages_by_id={})
        m.recall_at = {20: 0.9, 1: 0.5}
        m.n_questions = 10
        out = format_metrics(m)
        assert "recall@1" in out and "recall@20" in out
        assert out.index("recall@1 ") < out.index("recall@20")

    def test_predictions_round_trip(self, tmp_path):
        preds = {"q1": "alpha", "q2": "beta gamma"}
        path = tmp_path / "preds.jsonl"
        write_predictions(preds, path)
        assert load_predictions(path) == preds

    def test_duplicate_prediction_rejected(self, tmp_path):
        path = tmp_path / "preds.jsonl"
        path.write_text('{"question_id": "q1", "answer": "a"}\n'
                        '{"question_id": "q1", "answer": "b"}\n')
        with pytest.raises(Exception, match="q1"):
            load_predictions(path)
