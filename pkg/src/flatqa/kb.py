"""Knowledge-base flattening: triple/hyper-relation linearization, 2-hop
neighborhood extraction, and packing ranked relation sentences into passages."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from .corpus import CorpusError, Passage, SourceType, iter_jsonl, tokenize, write_jsonl_atomic

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KBEntity:
    id: str
    surface: str


# Literal-valued objects are plain strings; they are not graph nodes.
KBObject = Union[KBEntity, str]


def object_surface(obj: KBObject) -> str:
    return obj.surface if isinstance(obj, KBEntity) else obj


def _object_key(obj: KBObject) -> tuple[str, str]:
    if isinstance(obj, KBEntity):
        return ("entity", obj.id)
    return ("literal", obj)


@dataclass(frozen=True)
class KBTriple:
    subject: KBEntity
    predicate: str
    obj: KBObject


@dataclass(frozen=True)
class HyperRelation:
    """A subject with a primary predicate-object pair plus qualifier pairs.

    With zero qualifiers this is equivalent to a plain triple.
    """

    subject: KBEntity
    primary: tuple[str, KBObject]
    qualifiers: tuple[tuple[str, KBObject], ...] = ()

    def key(self) -> tuple:
        """Dedup key: subject id, primary pair, and sorted qualifier pairs."""
        quals = tuple(sorted((p, _object_key(o)) for p, o in self.qualifiers))
        return (self.subject.id, self.primary[0], _object_key(self.primary[1]), quals)

    @property
    def relation_id(self) -> str:
        digest = hashlib.sha1(json.dumps(self.key(), sort_keys=True).encode("utf-8"))
        return "rel-" + digest.hexdigest()[:16]

    def entity_ids(self) -> list[str]:
        """Subject id plus ids of all entity-valued objects (qualifiers included)."""
        ids = [self.subject.id]
        for _, obj in (self.primary, *self.qualifiers):
            if isinstance(obj, KBEntity):
                ids.append(obj.id)
        return ids

    def to_triple(self) -> KBTriple:
        return KBTriple(self.subject, self.primary[0], self.primary[1])


def linearize_triple(t: KBTriple) -> str:
    """Concatenate the surface forms: "<subject> <predicate> <object>"."""
    parts = {
        "subject": t.subject.surface,
        "predicate": t.predicate,
        "object": object_surface(t.obj),
    }
    for name, value in parts.items():
        if not value:
            raise ValueError(f"cannot linearize triple: empty {name}")
    return f"{parts['subject']} {parts['predicate']} {parts['object']}."


def linearize_hyper_relation(h: HyperRelation) -> str:
    """One sentence with a comma-separated clause per predicate, primary first.

    With zero qualifiers the output equals linearize_triple of the primary.
    """
    clauses = [linearize_triple(h.to_triple()).removesuffix(".")]
    for pred, obj in h.qualifiers:
        if not pred:
            raise ValueError("cannot linearize hyper-relation: empty qualifier predicate")
        surface = object_surface(obj)
        if not surface:
            raise ValueError("cannot linearize hyper-relation: empty qualifier object")
        clauses.append(f"{pred} {surface}")
    return ", ".join(clauses) + "."


class KBGraph:
    """Adjacency over hyper-relations: entity id -> relations where that entity
    is the subject or appears as an entity-valued object."""

    def __init__(self, relations: Iterable[HyperRelation]):
        self.relations: list[HyperRelation] = []
        self.adjacency: dict[str, list[HyperRelation]] = {}
        self._surfaces: dict[str, str] = {}
        seen: set[tuple] = set()
        for rel in relations:
            k = rel.key()
            if k in seen:
                continue
            seen.add(k)
            self.relations.append(rel)
            for eid in set(rel.entity_ids()):
                self.adjacency.setdefault(eid, []).append(rel)
            self._surfaces[rel.subject.id] = rel.subject.surface
            for _, obj in (rel.primary, *rel.qualifiers):
                if isinstance(obj, KBEntity):
                    self._surfaces.setdefault(obj.id, obj.surface)

    def entity_ids(self) -> set[str]:
        return set(self.adjacency)

    def __len__(self) -> int:
        return len(self.relations)


def two_hop_neighborhood(graph: KBGraph, seeds: Sequence[str]) -> set[HyperRelation]:
    """Relations reachable by traversing at most 2 edges from the seeds.

    Each relation counts as one edge between its subject and each entity-valued
    object; literals terminate traversal. Unknown seeds are skipped with a
    warning. The result is independent of seed order.
    """
    known = [s for s in seeds if s in graph.adjacency]
    unknown = len(seeds) - len(known)
    if unknown:
        logger.warning("two_hop_neighborhood: skipped %d unknown seed entity id(s)", unknown)
    if not known:
        return set()

    first_hop: set[HyperRelation] = set()
    for seed in known:
        first_hop.update(graph.adjacency[seed])
    reachable = set(known)
    for rel in first_hop:
        reachable.update(rel.entity_ids())

    result: set[HyperRelation] = set()
    for eid in reachable:
        result.update(graph.adjacency.get(eid, ()))
    return result


@dataclass(frozen=True)
class RelationSentence:
    """A linearized relation ready for packing, in retrieval rank order."""

    relation_id: str
    text: str
    title: str = ""


def relation_sentence(rel: HyperRelation) -> RelationSentence:
    return RelationSentence(rel.relation_id, linearize_hyper_relation(rel), rel.subject.surface)


def pack_relations(ranked: Sequence[RelationSentence], token_limit: int,
                   id_prefix: str = "kb") -> list[Passage]:
    """Greedily pack consecutive ranked sentences into passages of at most
    token_limit tokens. A single sentence over the limit becomes its own
    passage, flagged oversized in provenance, never split."""
    if token_limit < 1:
        raise ValueError("token_limit must be >= 1")
    passages: list[Passage] = []
    group: list[RelationSentence] = []
    group_tokens = 0

    def flush(oversized: bool = False) -> None:
        nonlocal group, group_tokens
        if not group:
            return
        provenance: dict = {"relation_ids": [s.relation_id for s in group]}
        if oversized:
            provenance["oversized"] = True
        passages.append(Passage(
            id=f"{id_prefix}:{len(passages)}",
            source=SourceType.KB,
            title=group[0].title,
            text=" ".join(s.text for s in group),
            provenance=provenance,
        ))
        group = []
        group_tokens = 0

    for sent in ranked:
        n = len(tokenize(sent.text))
        if not group and n > token_limit:
            group = [sent]
            flush(oversized=True)
            continue
        if group and group_tokens + n > token_limit:
            flush()
            if n > token_limit:
                group = [sent]
                flush(oversized=True)
                continue
        group.append(sent)
        group_tokens += n
    flush()
    return passages


def _parse_object(obj: dict) -> KBObject:
    if "literal" in obj:
        return str(obj["literal"])
    if "id" in obj and "surface" in obj:
        return KBEntity(id=str(obj["id"]), surface=str(obj["surface"]))
    raise ValueError("object must carry either 'literal' or 'id'+'surface'")


def _object_to_dict(obj: KBObject) -> dict:
    if isinstance(obj, KBEntity):
        return {"id": obj.id, "surface": obj.surface}
    return {"literal": obj}


def relation_from_dict(d: dict) -> HyperRelation:
    for key in ("subject", "predicate", "object"):
        if key not in d:
            raise ValueError(f"missing {key!r} field")
    subject = d["subject"]
    if not isinstance(subject, dict) or "id" not in subject or "surface" not in subject:
        raise ValueError("subject must carry 'id' and 'surface'")
    qualifiers = []
    for q in d.get("qualifiers", []):
        if "predicate" not in q or "object" not in q:
            raise ValueError("qualifier must carry 'predicate' and 'object'")
        qualifiers.append((str(q["predicate"]), _parse_object(q["object"])))
    return HyperRelation(
        subject=KBEntity(id=str(subject["id"]), surface=str(subject["surface"])),
        primary=(str(d["predicate"]), _parse_object(d["object"])),
        qualifiers=tuple(qualifiers),
    )


def relation_to_dict(rel: HyperRelation) -> dict:
    return {
        "subject": {"id": rel.subject.id, "surface": rel.subject.surface},
        "predicate": rel.primary[0],
        "object": _object_to_dict(rel.primary[1]),
        "qualifiers": [
            {"predicate": p, "object": _object_to_dict(o)} for p, o in rel.qualifiers
        ],
    }


def load_relations(path: str | Path) -> list[HyperRelation]:
    relations = []
    for lineno, obj in iter_jsonl(path):
        try:
            relations.append(relation_from_dict(obj))
        except ValueError as exc:
            raise CorpusError(
                f"{path}:{lineno}: {exc}",
                path=str(path), line=lineno, record=json.dumps(obj, ensure_ascii=False),
            ) from exc
    return relations


def write_relations(relations: Sequence[HyperRelation], path: str | Path) -> None:
    write_jsonl_atomic(path, (relation_to_dict(r) for r in relations))


def load_entity_links(path: str | Path) -> dict[str, list[str]]:
    """Pre-computed entity linking results: question id -> linked entity ids."""
    links: dict[str, list[str]] = {}
    for lineno, obj in iter_jsonl(path):
        if "question_id" not in obj or "entities" not in obj:
            raise CorpusError(
                f"{path}:{lineno}: missing 'question_id' or 'entities'",
                path=str(path), line=lineno, record=json.dumps(obj, ensure_ascii=False),
            )
        links[str(obj["question_id"])] = [str(e) for e in obj["entities"]]
    return links


def write_entity_links(links: Mapping[str, Sequence[str]], path: str | Path) -> None:
    write_jsonl_atomic(
        path,
        ({"question_id": qid, "entities": list(ents)} for qid, ents in links.items()),
    )
