from __future__ import annotations

from kgalign.kg import (
    AttributeTriple,
    EntityRef,
    KnowledgeGraph,
    RelationalTriple,
    build_graph,
)


def entity_uris(n: int, base: str = "http://a.example.org/resource/E") -> dict[int, str]:
    return {i: f"{base}{i}" for i in range(n)}


def make_graph(
    uris: dict[int, str],
    att: list[tuple[int, str, str]] = (),
    rel: list[tuple[int, str, int]] = (),
) -> KnowledgeGraph:
    """Build a graph from uri-keyed shorthand triples.

    ``att`` entries are (head_id, attribute_uri, value); ``rel`` entries
    are (head_id, relation_uri, tail_id). Attribute and relation uris are
    interned to dense ids in order of first appearance, as ingestion does.
    """
    entities = {i: EntityRef.from_uri(i, uri) for i, uri in uris.items()}
    att_ids: dict[str, int] = {}
    att_triples = []
    for head, attr_uri, value in att:
        aid = att_ids.setdefault(attr_uri, len(att_ids))
        att_triples.append(AttributeTriple(head, aid, value))
    rel_ids: dict[str, int] = {}
    rel_triples = []
    for head, rel_uri, tail in rel:
        rid = rel_ids.setdefault(rel_uri, len(rel_ids))
        rel_triples.append(RelationalTriple(head, rid, tail))
    return build_graph(
        entities,
        {rid: uri for uri, rid in rel_ids.items()},
        {aid: uri for uri, aid in att_ids.items()},
        rel_triples,
        att_triples,
    )
