"""Synthetic KG-pair fixtures with controllable retrieval quality.

Generates a source/target graph pair, a complete gold alignment, and
embedding files in the ingestion formats. Paired entities share a base
embedding vector; a noise rate re-randomizes that fraction of source
vectors, pushing their gold targets out of the retrieval top-k. The
measured recall is recorded in the fixture manifest at generation time.

Every entity carries at least one attribute triple and one outgoing
relation triple so neither reasoning stage is skipped for lack of data.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import kg
from .retrieval import load_embeddings, recall_at_k, top_k

ATTR_BASE = "http://kgalign.test/property/attr"
REL_BASE = "http://kgalign.test/relation/rel"
SOURCE_ENTITY_BASE = "http://src.kgalign.test/resource/Entity_"
TARGET_ENTITY_BASE = "http://tgt.kgalign.test/resource/Thing_"


@dataclass(frozen=True)
class FixtureSpec:
    entities: int = 50
    attributes: int = 8
    relations: int = 4
    noise: float = 0.0
    dim: int = 16
    seed: int = 0
    recall_k: int = 10

    def __post_init__(self):
        if self.entities < 2:
            raise ValueError("fixture needs at least 2 entities per side")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError(f"noise rate {self.noise} outside [0, 1]")
        if self.attributes < 1 or self.relations < 1:
            raise ValueError("attribute and relation vocabularies must be non-empty")
        if self.recall_k > self.entities:
            raise ValueError("recall_k cannot exceed the entity count")


def _side(
    rng: random.Random,
    ids: list[int],
    uri_base: str,
    spec: FixtureSpec,
    shared_values: Mapping[int, str],
) -> kg.KnowledgeGraph:
    entities = {i: kg.EntityRef.from_uri(i, f"{uri_base}{i}") for i in ids}
    att_uris = [f"{ATTR_BASE}{j}" for j in range(spec.attributes)]
    rel_uris = [f"{REL_BASE}{j}" for j in range(spec.relations)]
    att_ids = {uri: j for j, uri in enumerate(att_uris)}
    rel_ids = {uri: j for j, uri in enumerate(rel_uris)}

    att_triples = []
    rel_triples = []
    for position, entity in enumerate(ids):
        # one anchor attribute shared across the gold pair, plus extras
        anchor = att_uris[position % spec.attributes]
        att_triples.append(kg.AttributeTriple(entity, att_ids[anchor], shared_values[position]))
        for _ in range(rng.randint(0, 2)):
            uri = rng.choice(att_uris)
            att_triples.append(
                kg.AttributeTriple(entity, att_ids[uri], f"v{rng.randint(0, 99)}")
            )
        neighbors = rng.sample(ids, k=min(len(ids), 1 + rng.randint(0, 1)))
        for neighbor in neighbors:
            rel_triples.append(
                kg.RelationalTriple(entity, rel_ids[rng.choice(rel_uris)], neighbor)
            )
    return kg.build_graph(
        entities,
        {j: uri for uri, j in rel_ids.items()},
        {j: uri for uri, j in att_ids.items()},
        rel_triples,
        att_triples,
    )


def write_embeddings(path: str | Path, vectors: Mapping[int, np.ndarray]) -> None:
    ids = sorted(vectors)
    dim = len(next(iter(vectors.values()))) if ids else 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(f"{len(ids)} {dim}\n")
        for entity_id in ids:
            components = " ".join(repr(float(c)) for c in vectors[entity_id])
            handle.write(f"{entity_id} {components}\n")


def generate_fixture(spec: FixtureSpec, out_dir: str | Path) -> dict:
    """Write a full fixture into ``out_dir`` and return its manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(spec.seed)
    np_rng = np.random.default_rng(spec.seed)

    n = spec.entities
    source_ids = list(range(n))
    target_ids = [n + i for i in range(n)]
    gold = {i: n + i for i in range(n)}
    shared_values = {pos: f"anchor_{pos}" for pos in range(n)}

    source_graph = _side(rng, source_ids, SOURCE_ENTITY_BASE, spec, shared_values)
    target_graph = _side(rng, target_ids, TARGET_ENTITY_BASE, spec, shared_values)

    base_vectors = np_rng.normal(size=(n, spec.dim))
    target_vectors = {n + i: base_vectors[i] + 0.05 * np_rng.normal(size=spec.dim) for i in range(n)}
    source_vectors = {}
    for i in range(n):
        if rng.random() < spec.noise:
            source_vectors[i] = np_rng.normal(size=spec.dim)
        else:
            source_vectors[i] = base_vectors[i] + 0.05 * np_rng.normal(size=spec.dim)

    kg.write_graph(source_graph, out, "1")
    kg.write_graph(target_graph, out, "2")
    kg.write_gold(out / "ref_ent_ids", gold)
    write_embeddings(out / "emb_1.txt", source_vectors)
    write_embeddings(out / "emb_2.txt", target_vectors)

    source_matrix = load_embeddings(out / "emb_1.txt")
    target_matrix = load_embeddings(out / "emb_2.txt")
    sets = [top_k(i, spec.recall_k, source_matrix, target_matrix) for i in source_ids]
    report = recall_at_k(sets, gold)

    manifest = {
        "spec": asdict(spec),
        "files": {
            "source": ["ent_ids_1", "rel_ids_1", "triples_1", "att_triples_1", "emb_1.txt"],
            "target": ["ent_ids_2", "rel_ids_2", "triples_2", "att_triples_2", "emb_2.txt"],
            "gold": "ref_ent_ids",
        },
        "stats": {
            "source": source_graph.stats()._asdict(),
            "target": target_graph.stats()._asdict(),
        },
        "recall": {"k": spec.recall_k, "recall": report.recall, "evaluated": report.evaluated},
    }
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as handle:
        json.dump(manifest, handle, sort_keys=True, indent=2, ensure_ascii=False)
        handle.write("\n")
    return manifest
