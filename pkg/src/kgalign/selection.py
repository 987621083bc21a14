"""Heuristic attribute and relation selection by identifiability.

An attribute (or relation) discriminates well among candidate targets
when it is close to functional and common among the candidates:

    function degree = |distinct heads| / |distinct (head, object) pairs|,
                      counted over the union of both graphs' triples
    frequency       = |candidates possessing it| / |candidates|
    identifiability = function degree * frequency

Attributes and relations are matched across graphs by uri; all scores
are exact rationals. Heads from the two graphs are distinct set elements
even when their integer ids collide, and duplicate triples collapse
before counting (set semantics).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence, Union

from .errors import (
    AttributeUnknownError,
    EmptyCandidatesError,
    RelationUnknownError,
)
from .kg import AttributeTriple, KnowledgeGraph, RelationalTriple

Triple = Union[AttributeTriple, RelationalTriple]


class TripleKind(Enum):
    ATTRIBUTE = "attribute"
    RELATION = "relation"


@dataclass(frozen=True)
class IdentifiabilityScore:
    subject: int
    uri: str
    function_degree: Fraction
    frequency: Fraction
    identifiability: Fraction


@dataclass(frozen=True)
class SelectedTriples:
    """Triples of an entity's top-k subjects, best subject first.

    Ordered by identifiability descending, then ascending subject id,
    then input order. Multiple triples of one selected subject all
    appear but count once toward k.
    """

    entity: int
    kind: TripleKind
    triples: tuple[tuple[Triple, Fraction], ...]

    def __len__(self) -> int:
        return len(self.triples)

    @property
    def empty(self) -> bool:
        return not self.triples


def _count_degrees(
    sides: Iterable[tuple[str, KnowledgeGraph]], kind: TripleKind
) -> dict[str, Fraction]:
    heads: dict[str, set] = {}
    pairs: dict[str, set] = {}
    for tag, kg in sides:
        if kind is TripleKind.ATTRIBUTE:
            for t in kg.att_triples:
                uri = kg.attributes[t.attribute]
                heads.setdefault(uri, set()).add((tag, t.head))
                pairs.setdefault(uri, set()).add((tag, t.head, t.value))
        else:
            for t in kg.rel_triples:
                uri = kg.relations[t.relation]
                heads.setdefault(uri, set()).add((tag, t.head))
                pairs.setdefault(uri, set()).add((tag, t.head, t.tail))
    return {uri: Fraction(len(heads[uri]), len(pairs[uri])) for uri in heads}


class TripleSelector:
    """Scores and selects triples for a fixed source/target graph pair.

    Function degrees are computed once per kind and cached (they depend
    only on the graph pair); frequencies depend on the candidate set and
    are computed per call, with per-entity possession sets memoized.
    """

    def __init__(self, source: KnowledgeGraph, target: KnowledgeGraph):
        self.source = source
        self.target = target
        self._fun_att: dict[str, Fraction] | None = None
        self._fun_rel: dict[str, Fraction] | None = None
        self._target_att_uris: dict[int, frozenset[str]] = {}
        self._target_rel_uris: dict[int, frozenset[str]] = {}

    def prime(self) -> None:
        """Build both function-degree caches eagerly.

        Callers that score from multiple threads should prime first so
        the caches freeze before concurrent reads begin.
        """
        self._fun_att_cache()
        self._fun_rel_cache()

    # -- function degree ------------------------------------------------

    def _fun_att_cache(self) -> dict[str, Fraction]:
        if self._fun_att is None:
            self._fun_att = _count_degrees(
                (("s", self.source), ("t", self.target)), TripleKind.ATTRIBUTE
            )
        return self._fun_att

    def _fun_rel_cache(self) -> dict[str, Fraction]:
        if self._fun_rel is None:
            self._fun_rel = _count_degrees(
                (("s", self.source), ("t", self.target)), TripleKind.RELATION
            )
        return self._fun_rel

    def function_degree_att(self, uri: str) -> Fraction:
        fun = self._fun_att_cache().get(uri)
        if fun is None:
            raise AttributeUnknownError(f"attribute {uri!r} absent from both graphs")
        return fun

    def function_degree_rel(self, uri: str) -> Fraction:
        fun = self._fun_rel_cache().get(uri)
        if fun is None:
            raise RelationUnknownError(f"relation {uri!r} absent from both graphs")
        return fun

    # -- frequency --------------------------------------------------------

    def _att_uris_of(self, entity: int) -> frozenset[str]:
        uris = self._target_att_uris.get(entity)
        if uris is None:
            uris = frozenset(
                self.target.attributes[t.attribute] for t in self.target.attributes_of(entity)
            )
            self._target_att_uris[entity] = uris
        return uris

    def _rel_uris_of(self, entity: int) -> frozenset[str]:
        uris = self._target_rel_uris.get(entity)
        if uris is None:
            uris = frozenset(
                self.target.relations[t.relation] for t in self.target.outgoing(entity)
            )
            self._target_rel_uris[entity] = uris
        return uris

    def frequency_att(self, uri: str, candidates: Sequence[int]) -> Fraction:
        if not candidates:
            raise EmptyCandidatesError("frequency over an empty candidate set")
        possessing = sum(1 for c in candidates if uri in self._att_uris_of(c))
        return Fraction(possessing, len(candidates))

    def frequency_rel(self, uri: str, candidates: Sequence[int]) -> Fraction:
        if not candidates:
            raise EmptyCandidatesError("frequency over an empty candidate set")
        possessing = sum(1 for c in candidates if uri in self._rel_uris_of(c))
        return Fraction(possessing, len(candidates))

    # -- identifiability ---------------------------------------------------

    def identifiability_att(self, uri: str, candidates: Sequence[int]) -> Fraction:
        if not candidates:
            raise EmptyCandidatesError("identifiability over an empty candidate set")
        fun = self._fun_att_cache().get(uri)
        if fun is None:
            return Fraction(0)
        return fun * self.frequency_att(uri, candidates)

    def identifiability_rel(self, uri: str, candidates: Sequence[int]) -> Fraction:
        if not candidates:
            raise EmptyCandidatesError("identifiability over an empty candidate set")
        fun = self._fun_rel_cache().get(uri)
        if fun is None:
            return Fraction(0)
        return fun * self.frequency_rel(uri, candidates)

    # -- selection -----------------------------------------------------------

    def _graph_for(self, side: str) -> KnowledgeGraph:
        if side == "source":
            return self.source
        if side == "target":
            return self.target
        raise ValueError(f"side must be 'source' or 'target', got {side!r}")

    def score_subjects(
        self,
        entity: int,
        candidates: Sequence[int],
        kind: TripleKind,
        side: str = "source",
    ) -> list[IdentifiabilityScore]:
        """Identifiability of every distinct subject the entity possesses."""
        kg = self._graph_for(side)
        if kind is TripleKind.ATTRIBUTE:
            triples = kg.attributes_of(entity)
            subject_of = lambda t: t.attribute
            uri_of = kg.attributes.__getitem__
            fun_cache = self._fun_att_cache()
            frequency = self.frequency_att
        else:
            triples = kg.outgoing(entity)
            subject_of = lambda t: t.relation
            uri_of = kg.relations.__getitem__
            fun_cache = self._fun_rel_cache()
            frequency = self.frequency_rel
        scores: dict[int, IdentifiabilityScore] = {}
        for triple in triples:
            subject = subject_of(triple)
            if subject in scores:
                continue
            uri = uri_of(subject)
            fun = fun_cache.get(uri, Fraction(0))
            freq = frequency(uri, candidates)
            scores[subject] = IdentifiabilityScore(subject, uri, fun, freq, fun * freq)
        return sorted(scores.values(), key=lambda s: (-s.identifiability, s.subject))

    def select_top_triples(
        self,
        entity: int,
        candidates: Sequence[int],
        kind: TripleKind,
        k: int,
        side: str = "source",
    ) -> SelectedTriples:
        """Keep the triples of the entity's k most identifying subjects."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        kg = self._graph_for(side)
        triples = kg.attributes_of(entity) if kind is TripleKind.ATTRIBUTE else kg.outgoing(entity)
        if not triples:
            return SelectedTriples(entity, kind, ())
        ranked = self.score_subjects(entity, candidates, kind, side)
        top = ranked[:k]
        rank = {score.subject: i for i, score in enumerate(top)}
        score_of = {score.subject: score.identifiability for score in top}
        subject_of = (lambda t: t.attribute) if kind is TripleKind.ATTRIBUTE else (lambda t: t.relation)
        kept = [t for t in triples if subject_of(t) in rank]
        kept.sort(key=lambda t: rank[subject_of(t)])  # stable: input order within subject
        return SelectedTriples(
            entity, kind, tuple((t, score_of[subject_of(t)]) for t in kept)
        )

    def dump_scores(
        self,
        path: str | Path,
        entities: Sequence[tuple[str, int, Sequence[int]]],
    ) -> None:
        """Debug dump: one TSV row per (entity, kind, subject).

        ``entities`` holds (side, entity_id, candidate_ids) rows.
        """
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            for side, entity, candidates in entities:
                for kind in TripleKind:
                    for s in self.score_subjects(entity, candidates, kind, side):
                        handle.write(
                            f"{entity}\t{kind.value}\t{s.uri}\t"
                            f"{float(s.function_degree):.6f}\t{float(s.frequency):.6f}\t"
                            f"{float(s.identifiability):.6f}\n"
                        )
