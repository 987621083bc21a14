"""Triple-file ingestion into an immutable in-memory knowledge graph.

File layouts (TSV, UTF-8, LF):
    ent_ids_*      <id> TAB <uri>
    triples_*      <head_id> TAB <relation_id> TAB <tail_id>
    att_triples_*  <entity_uri_or_id> TAB <attribute_uri> TAB <literal>
    ref_ent_ids    <source_id> TAB <target_id>

Attribute files may reference entities outside the sampled subset; such
lines are skipped and counted rather than rejected.
"""

from __future__ import annotations

import os
import pickle
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple
from urllib.parse import unquote

from .errors import (
    DanglingReferenceError,
    DuplicateIdError,
    IntegrityError,
    ParseError,
)

SNAPSHOT_VERSION = 1


def label_from_uri(uri: str) -> str:
    """Derive a human-readable name from an IRI.

    Takes the final path segment, percent-decodes it, and replaces
    underscores with spaces (DBpedia encodes spaces as underscores).
    """
    segment = uri.rsplit("/", 1)[-1]
    return unquote(segment).replace("_", " ")


@dataclass(frozen=True)
class EntityRef:
    id: int
    uri: str
    label: str

    @classmethod
    def from_uri(cls, entity_id: int, uri: str) -> "EntityRef":
        return cls(entity_id, uri, label_from_uri(uri))


class RelationalTriple(NamedTuple):
    head: int
    relation: int
    tail: int


class AttributeTriple(NamedTuple):
    head: int
    attribute: int
    value: str


class GraphStats(NamedTuple):
    entity_count: int
    relation_count: int
    attribute_count: int
    rel_triple_count: int
    att_triple_count: int


@dataclass(frozen=True)
class KnowledgeGraph:
    """One side of an alignment task. Immutable after :func:`build_graph`.

    ``att_by_entity`` / ``rel_out`` / ``rel_in`` index every triple under
    its participating entity ids, preserving input order per entity.
    """

    entities: Mapping[int, EntityRef]
    relations: Mapping[int, str]
    attributes: Mapping[int, str]
    rel_triples: tuple[RelationalTriple, ...]
    att_triples: tuple[AttributeTriple, ...]
    att_by_entity: Mapping[int, tuple[AttributeTriple, ...]]
    rel_out: Mapping[int, tuple[RelationalTriple, ...]]
    rel_in: Mapping[int, tuple[RelationalTriple, ...]]

    def label(self, entity_id: int) -> str:
        return self.entities[entity_id].label

    def relation_label(self, relation_id: int) -> str:
        return label_from_uri(self.relations[relation_id])

    def attribute_label(self, attribute_id: int) -> str:
        return label_from_uri(self.attributes[attribute_id])

    def attributes_of(self, entity_id: int) -> tuple[AttributeTriple, ...]:
        return self.att_by_entity.get(entity_id, ())

    def outgoing(self, entity_id: int) -> tuple[RelationalTriple, ...]:
        return self.rel_out.get(entity_id, ())

    def incoming(self, entity_id: int) -> tuple[RelationalTriple, ...]:
        return self.rel_in.get(entity_id, ())

    def stats(self) -> GraphStats:
        return GraphStats(
            entity_count=len(self.entities),
            relation_count=len(self.relations),
            attribute_count=len(self.attributes),
            rel_triple_count=len(self.rel_triples),
            att_triple_count=len(self.att_triples),
        )


class AttributeParseResult(NamedTuple):
    triples: list[AttributeTriple]
    attributes: dict[int, str]
    skipped: int


def _lines(path: str | Path) -> Iterable[tuple[int, str]]:
    with open(path, encoding="utf-8", newline="") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.rstrip("\r\n")
            if line:
                yield line_no, line


def parse_entity_file(path: str | Path) -> dict[int, EntityRef]:
    """Parse an ``ent_ids_*`` file into an id -> EntityRef map."""
    entities: dict[int, EntityRef] = {}
    for line_no, line in _lines(path):
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(str(path), line_no, f"expected 2 fields, got {len(fields)}")
        raw_id, uri = fields
        try:
            entity_id = int(raw_id)
        except ValueError:
            raise ParseError(str(path), line_no, f"id {raw_id!r} is not an integer") from None
        if entity_id < 0:
            raise ParseError(str(path), line_no, f"id {entity_id} is negative")
        if not uri:
            raise ParseError(str(path), line_no, "empty uri")
        if entity_id in entities:
            raise DuplicateIdError(f"{path}:{line_no}: duplicate entity id {entity_id}")
        entities[entity_id] = EntityRef.from_uri(entity_id, uri)
    return entities


def parse_name_map(path: str | Path) -> dict[int, str]:
    """Parse an ``<id> TAB <uri>`` file (relation or attribute names)."""
    names: dict[int, str] = {}
    for line_no, line in _lines(path):
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(str(path), line_no, f"expected 2 fields, got {len(fields)}")
        try:
            name_id = int(fields[0])
        except ValueError:
            raise ParseError(str(path), line_no, f"id {fields[0]!r} is not an integer") from None
        if name_id in names:
            raise DuplicateIdError(f"{path}:{line_no}: duplicate id {name_id}")
        names[name_id] = fields[1]
    return names


def parse_relational_triples(
    path: str | Path,
    entities: Mapping[int, EntityRef],
    relations: dict[int, str],
) -> list[RelationalTriple]:
    """Parse a ``triples_*`` file.

    Relation ids not present in ``relations`` are added with a synthesized
    uri (triple files carry no relation names). Head and tail ids must
    resolve to known entities.
    """
    triples: list[RelationalTriple] = []
    for line_no, line in _lines(path):
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(str(path), line_no, f"expected 3 fields, got {len(fields)}")
        try:
            head, relation, tail = (int(f) for f in fields)
        except ValueError:
            raise ParseError(str(path), line_no, f"non-integer field in {line!r}") from None
        if head not in entities:
            raise DanglingReferenceError(f"{path}:{line_no}: unknown head entity {head}")
        if tail not in entities:
            raise DanglingReferenceError(f"{path}:{line_no}: unknown tail entity {tail}")
        if relation not in relations:
            relations[relation] = f"relation_{relation}"
        triples.append(RelationalTriple(head, relation, tail))
    return triples


def parse_attribute_triples(
    path: str | Path,
    entities: Mapping[int, EntityRef],
) -> AttributeParseResult:
    """Parse an ``att_triples_*`` file.

    The first field may be an entity uri (raw dumps) or an entity id;
    both are normalized to ids. Attribute uris are interned to dense ids
    in order of first appearance. Lines whose entity is unknown are
    skipped and counted. Literals containing tabs arrive as >3 fields and
    are re-joined.
    """
    uri_to_id = {ref.uri: ref.id for ref in entities.values()}
    attribute_ids: dict[str, int] = {}
    attributes: dict[int, str] = {}
    triples: list[AttributeTriple] = []
    skipped = 0
    for line_no, line in _lines(path):
        fields = line.split("\t")
        if len(fields) < 3:
            raise ParseError(str(path), line_no, f"expected >=3 fields, got {len(fields)}")
        key, attribute_uri = fields[0], fields[1]
        value = "\t".join(fields[2:])
        if key in uri_to_id:
            head = uri_to_id[key]
        elif key.isdigit() and int(key) in entities:
            head = int(key)
        else:
            skipped += 1
            continue
        attribute_id = attribute_ids.get(attribute_uri)
        if attribute_id is None:
            attribute_id = len(attribute_ids)
            attribute_ids[attribute_uri] = attribute_id
            attributes[attribute_id] = attribute_uri
        triples.append(AttributeTriple(head, attribute_id, value))
    return AttributeParseResult(triples, attributes, skipped)


def parse_gold(path: str | Path) -> dict[int, int]:
    """Parse a ``ref_ent_ids`` gold alignment (source_id TAB target_id)."""
    gold: dict[int, int] = {}
    for line_no, line in _lines(path):
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(str(path), line_no, f"expected 2 fields, got {len(fields)}")
        try:
            source, target = int(fields[0]), int(fields[1])
        except ValueError:
            raise ParseError(str(path), line_no, f"non-integer field in {line!r}") from None
        if source in gold:
            raise DuplicateIdError(f"{path}:{line_no}: duplicate source id {source}")
        gold[source] = target
    return gold


def build_graph(
    entities: Mapping[int, EntityRef],
    relations: Mapping[int, str],
    attributes: Mapping[int, str],
    rel_triples: Iterable[RelationalTriple],
    att_triples: Iterable[AttributeTriple],
) -> KnowledgeGraph:
    """Assemble an immutable graph with complete per-entity indexes.

    Raises IntegrityError if any triple references an unknown entity,
    relation, or attribute.
    """
    rel_list = tuple(RelationalTriple(*t) for t in rel_triples)
    att_list = tuple(AttributeTriple(*t) for t in att_triples)

    att_index: dict[int, list[AttributeTriple]] = {}
    rel_out_index: dict[int, list[RelationalTriple]] = {}
    rel_in_index: dict[int, list[RelationalTriple]] = {}

    for triple in rel_list:
        if triple.head not in entities:
            raise IntegrityError(f"relational triple {triple} has unknown head")
        if triple.tail not in entities:
            raise IntegrityError(f"relational triple {triple} has unknown tail")
        if triple.relation not in relations:
            raise IntegrityError(f"relational triple {triple} has unknown relation")
        rel_out_index.setdefault(triple.head, []).append(triple)
        rel_in_index.setdefault(triple.tail, []).append(triple)

    for triple in att_list:
        if triple.head not in entities:
            raise IntegrityError(f"attribute triple {triple} has unknown head")
        if triple.attribute not in attributes:
            raise IntegrityError(f"attribute triple {triple} has unknown attribute")
        att_index.setdefault(triple.head, []).append(triple)

    return KnowledgeGraph(
        entities=dict(entities),
        relations=dict(relations),
        attributes=dict(attributes),
        rel_triples=rel_list,
        att_triples=att_list,
        att_by_entity={k: tuple(v) for k, v in att_index.items()},
        rel_out={k: tuple(v) for k, v in rel_out_index.items()},
        rel_in={k: tuple(v) for k, v in rel_in_index.items()},
    )


def stats(graph: KnowledgeGraph) -> GraphStats:
    return graph.stats()


def load_graph(
    entity_path: str | Path,
    rel_triple_path: str | Path,
    att_triple_path: str | Path,
    relation_names_path: str | Path | None = None,
) -> tuple[KnowledgeGraph, int]:
    """Parse one KG side from its three files.

    Returns the graph and the count of skipped attribute lines. A
    relation-names file, when present, pre-seeds relation uris so a
    serialized graph round-trips id-for-id.
    """
    entities = parse_entity_file(entity_path)
    relations = parse_name_map(relation_names_path) if relation_names_path else {}
    rel_triples = parse_relational_triples(rel_triple_path, entities, relations)
    att_result = parse_attribute_triples(att_triple_path, entities)
    graph = build_graph(entities, relations, att_result.attributes, rel_triples, att_result.triples)
    return graph, att_result.skipped


# -- serialization (round-trip and fixture output) --------------------------


def write_entity_file(path: str | Path, entities: Mapping[int, EntityRef]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for entity_id in sorted(entities):
            handle.write(f"{entity_id}\t{entities[entity_id].uri}\n")


def write_name_map(path: str | Path, names: Mapping[int, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for name_id in sorted(names):
            handle.write(f"{name_id}\t{names[name_id]}\n")


def write_relational_triples(path: str | Path, triples: Iterable[RelationalTriple]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for triple in triples:
            handle.write(f"{triple.head}\t{triple.relation}\t{triple.tail}\n")


def write_attribute_triples(path: str | Path, graph: KnowledgeGraph) -> None:
    """Write attribute triples uri-keyed, preserving input order.

    Order preservation keeps attribute-id interning stable across a
    serialize/parse round trip.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for triple in graph.att_triples:
            head_uri = graph.entities[triple.head].uri
            attr_uri = graph.attributes[triple.attribute]
            handle.write(f"{head_uri}\t{attr_uri}\t{triple.value}\n")


def write_gold(path: str | Path, gold: Mapping[int, int]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for source in sorted(gold):
            handle.write(f"{source}\t{gold[source]}\n")


def write_graph(graph: KnowledgeGraph, directory: str | Path, suffix: str) -> None:
    """Serialize a graph back to the ingestion file formats."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_entity_file(directory / f"ent_ids_{suffix}", graph.entities)
    write_name_map(directory / f"rel_ids_{suffix}", graph.relations)
    write_relational_triples(directory / f"triples_{suffix}", graph.rel_triples)
    write_attribute_triples(directory / f"att_triples_{suffix}", graph)


# -- binary snapshot cache ---------------------------------------------------


def save_snapshot(path: str | Path, payload: object, source_paths: Iterable[str | Path]) -> None:
    """Pickle ``payload`` together with the mtimes of its source files."""
    mtimes = {str(p): os.path.getmtime(p) for p in source_paths}
    with open(path, "wb") as handle:
        pickle.dump({"version": SNAPSHOT_VERSION, "mtimes": mtimes, "payload": payload}, handle)


def load_snapshot(path: str | Path) -> object | None:
    """Load a snapshot, or return None if missing, stale, or incompatible."""
    try:
        with open(path, "rb") as handle:
            record = pickle.load(handle)
    except (OSError, pickle.UnpicklingError, EOFError):
        return None
    if not isinstance(record, dict) or record.get("version") != SNAPSHOT_VERSION:
        return None
    for source, mtime in record.get("mtimes", {}).items():
        try:
            if os.path.getmtime(source) != mtime:
                return None
        except OSError:
            return None
    return record["payload"]
