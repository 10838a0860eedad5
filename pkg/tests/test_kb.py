import pytest

from flatqa.corpus import SourceType, tokenize
from flatqa.kb import (
    HyperRelation,
    KBEntity,
    KBGraph,
    KBTriple,
    linearize_hyper_relation,
    linearize_triple,
    load_entity_links,
    load_relations,
    pack_relations,
    relation_from_dict,
    relation_sentence,
    relation_to_dict,
    two_hop_neighborhood,
    write_entity_links,
    write_relations,
)


def ent(eid, surface=None):
    return KBEntity(id=eid, surface=surface or eid.title())


def rel(subj, pred, obj, *quals):
    return HyperRelation(subject=subj, primary=(pred, obj), qualifiers=tuple(quals))


class TestLinearizeTriple:
    def test_basic(self):
        t = KBTriple(ent("e1", "France"), "capital", ent("e2", "Paris"))
        assert linearize_triple(t) == "France capital Paris."

    def test_self_loop(self):
        x = ent("e1", "X")
        assert linearize_triple(KBTriple(x, "is", x)) == "X is X."

    def test_multiword_predicate(self):
        t = KBTriple(ent("e1", "A"), "married to", ent("e2", "B"))
        assert linearize_triple(t) == "A married to B."

    def test_literal_object(self):
        t = KBTriple(ent("e1", "A"), "born", "1981")
        assert linearize_triple(t) == "A born 1981."

    def test_empty_part_names_it(self):
        with pytest.raises(ValueError, match="predicate"):
            linearize_triple(KBTriple(ent("e1", "A"), "", ent("e2", "B")))
        with pytest.raises(ValueError, match="object"):
            linearize_triple(KBTriple(ent("e1", "A"), "p", ""))


class TestLinearizeHyperRelation:
    def test_paper_style_example(self):
        h = rel(
            ent("np", "Natalie Portman"),
            "played the character",
            ent("pa", "Padmé Amidala"),
            ("in the movie", ent("sw", "Star Wars")),
        )
        expected = "Natalie Portman played the character Padmé Amidala, in the movie Star Wars."
        assert linearize_hyper_relation(h) == expected

    def test_zero_qualifiers_equals_triple(self):
        h = rel(ent("e1", "France"), "capital", ent("e2", "Paris"))
        assert linearize_hyper_relation(h) == linearize_triple(h.to_triple())

    def test_comma_count_equals_qualifiers(self):
        h = rel(
            ent("e1", "A"), "p0", ent("e2", "B"),
            ("p1", ent("e3", "C")), ("p2", "lit"),
        )
        out = linearize_hyper_relation(h)
        assert out.count(",") == 2
        assert out.endswith(".")

    def test_empty_qualifier_object_rejected(self):
        h = rel(ent("e1", "A"), "p", ent("e2", "B"), ("q", ""))
        with pytest.raises(ValueError):
            linearize_hyper_relation(h)


class TestHyperRelation:
    def test_dedup_key_ignores_qualifier_order(self):
        q1 = ("p1", ent("e3", "C"))
        q2 = ("p2", "lit")
        a = rel(ent("e1", "A"), "p", ent("e2", "B"), q1, q2)
        b = rel(ent("e1", "A"), "p", ent("e2", "B"), q2, q1)
        assert a.key() == b.key()
        assert a.relation_id == b.relation_id

    def test_relation_id_stable_and_prefixed(self):
        r = rel(ent("e1", "A"), "p", ent("e2", "B"))
        assert r.relation_id == r.relation_id
        assert r.relation_id.startswith("rel-")

    def test_entity_ids_include_qualifier_entities_not_literals(self):
        r = rel(ent("e1"), "p", ent("e2"), ("q", ent("e3")), ("q2", "literal"))
        assert r.entity_ids() == ["e1", "e2", "e3"]


class TestKBGraph:
    def test_dedupes_relations(self):
        r = rel(ent("e1"), "p", ent("e2"))
        g = KBGraph([r, rel(ent("e1"), "p", ent("e2"))])
        assert len(g) == 1

    def test_adjacency_covers_subject_and_objects(self):
        r = rel(ent("e1"), "p", ent("e2"), ("q", ent("e3")))
        g = KBGraph([r])
        for eid in ("e1", "e2", "e3"):
            assert r in g.adjacency[eid]


class TestTwoHop:
    def chain(self):
        # A -r1- B -r2- C -r3- D
        r1 = rel(ent("A"), "p1", ent("B"))
        r2 = rel(ent("B"), "p2", ent("C"))
        r3 = rel(ent("C"), "p3", ent("D"))
        return KBGraph([r1, r2, r3]), r1, r2, r3

    def test_chain_two_hops(self):
        g, r1, r2, r3 = self.chain()
        assert two_hop_neighborhood(g, ["A"]) == {r1, r2}

    def test_saturation(self):
        g, r1, r2, r3 = self.chain()
        assert two_hop_neighborhood(g, list(g.entity_ids())) == {r1, r2, r3}

    def test_empty_seeds(self):
        g, *_ = self.chain()
        assert two_hop_neighborhood(g, []) == set()

    def test_unknown_seed_skipped(self):
        g, r1, r2, r3 = self.chain()
        assert two_hop_neighborhood(g, ["nope", "A"]) == {r1, r2}

    def test_seed_order_irrelevant(self):
        g, *_ = self.chain()
        assert two_hop_neighborhood(g, ["A", "D"]) == two_hop_neighborhood(g, ["D", "A"])

    def test_literal_terminates_traversal(self):
        # A -r1- "lit"; B -r2- C where r2 shares no entity with r1.
        r1 = rel(ent("A"), "p", "lit")
        r2 = rel(ent("B"), "p", ent("C"))
        g = KBGraph([r1, r2])
        assert two_hop_neighborhood(g, ["A"]) == {r1}

    def test_monotone_in_seeds(self):
        g, *_ = self.chain()
        base = two_hop_neighborhood(g, ["A"])
        assert base <= two_hop_neighborhood(g, ["A", "C"])


def sent(rid, n_tokens, title="T"):
    from flatqa.kb import RelationSentence
    return RelationSentence(rid, " ".join(f"w{i}" for i in range(n_tokens)), title)


class TestPackRelations:
    def test_greedy_prefix_packing(self):
        out = pack_relations([sent("r1", 40), sent("r2", 40), sent("r3", 40)], 100)
        assert [p.provenance["relation_ids"] for p in out] == [["r1", "r2"], ["r3"]]

    def test_oversized_flagged_not_split(self):
        out = pack_relations([sent("r1", 150)], 100)
        assert len(out) == 1
        assert out[0].provenance.get("oversized") is True
        assert out[0].token_count == 150

    def test_empty_input(self):
        assert pack_relations([], 100) == []

    def test_ids_cover_input_in_order(self):
        sents = [sent(f"r{i}", 10 + 7 * (i % 5)) for i in range(30)]
        out = pack_relations(sents, 100)
        flat = [rid for p in out for rid in p.provenance["relation_ids"]]
        assert flat == [s.relation_id for s in sents]

    def test_multi_member_within_limit(self):
        sents = [sent(f"r{i}", 33) for i in range(10)]
        for p in pack_relations(sents, 100):
            if len(p.provenance["relation_ids"]) > 1:
                assert p.token_count <= 100

    def test_source_and_prefix(self):
        out = pack_relations([sent("r1", 5)], 100, id_prefix="kb:q7")
        assert out[0].source is SourceType.KB
        assert out[0].id == "kb:q7:0"

    def test_token_limit_validated(self):
        with pytest.raises(ValueError):
            pack_relations([sent("r1", 5)], 0)

    def test_relation_sentence_builds_from_relation(self):
        r = rel(ent("e1", "France"), "capital", ent("e2", "Paris"))
        s = relation_sentence(r)
        assert s.text == "France capital Paris."
        assert s.title == "France"
        assert s.relation_id == r.relation_id
        assert len(tokenize(s.text)) == 3


class TestRelationIO:
    def test_round_trip(self, tmp_path):
        rels = [
            rel(ent("e1", "A"), "p", ent("e2", "B")),
            rel(ent("e3", "C"), "q", "literal", ("qual", ent("e4", "D"))),
        ]
        path = tmp_path / "kb.jsonl"
        write_relations(rels, path)
        assert load_relations(path) == rels

    def test_dict_round_trip_literal_object(self):
        r = rel(ent("e1", "A"), "born", "1981")
        assert relation_from_dict(relation_to_dict(r)) == r

    def test_missing_field_rejected(self):
        with pytest.raises(ValueError):
            relation_from_dict({"subject": {"id": "e1", "surface": "A"}, "predicate": "p"})

    def test_entity_links_round_trip(self, tmp_path):
        links = {"q1": ["e1", "e2"], "q2": []}
        path = tmp_path / "links.jsonl"
        write_entity_links(links, path)
        assert load_entity_links(path) == links
