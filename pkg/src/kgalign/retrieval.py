"""Embedding load and exact top-k candidate retrieval.

Candidate selection consumes externally produced entity embeddings (text
format: header ``<count> <dim>``, then ``<entity_id> <v1> ... <v_dim>``
per line) and ranks target entities by cosine similarity. Ranking is
exact; ties break by ascending target id. A precomputed-score TSV can
stand in for embeddings through :class:`ScoreTable`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    DuplicateIdError,
    EmptyEvalError,
    ParseError,
    ShapeError,
    UnknownEntityError,
)


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Dense vectors for one KG side, rows ordered by ascending entity id."""

    dim: int
    ids: tuple[int, ...]
    matrix: np.ndarray
    norms: np.ndarray
    row_of: Mapping[int, int]

    @classmethod
    def from_vectors(cls, vectors: Mapping[int, np.ndarray]) -> "EmbeddingMatrix":
        if not vectors:
            return cls(0, (), np.zeros((0, 0)), np.zeros(0), {})
        ids = tuple(sorted(vectors))
        matrix = np.vstack([np.asarray(vectors[i], dtype=float) for i in ids])
        if not np.all(np.isfinite(matrix)):
            raise ValueError("embedding vectors contain non-finite components")
        norms = np.linalg.norm(matrix, axis=1)
        row_of = {entity_id: row for row, entity_id in enumerate(ids)}
        return cls(matrix.shape[1], ids, matrix, norms, row_of)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, entity_id: int) -> bool:
        return entity_id in self.row_of

    def vector(self, entity_id: int) -> np.ndarray:
        row = self.row_of.get(entity_id)
        if row is None:
            raise UnknownEntityError(f"no embedding for entity {entity_id}")
        return self.matrix[row]


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Load the text embedding format, validating shape and finiteness."""
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().split()
        if len(header) != 2:
            raise ParseError(str(path), 1, "expected header '<count> <dim>'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise ParseError(str(path), 1, "non-integer header field") from None
        vectors: dict[int, np.ndarray] = {}
        for line_no, line in enumerate(handle, start=2):
            fields = line.split()
            if not fields:
                continue
            entity_id = int(fields[0])
            if entity_id in vectors:
                raise DuplicateIdError(f"{path}:{line_no}: duplicate entity id {entity_id}")
            if len(fields) - 1 != dim:
                raise ShapeError(
                    f"{path}:{line_no}: expected {dim} components, got {len(fields) - 1}"
                )
            vec = np.array([float(f) for f in fields[1:]])
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"{path}:{line_no}: non-finite component")
            vectors[entity_id] = vec
    if len(vectors) != count:
        raise ShapeError(f"{path}: header declares {count} rows, found {len(vectors)}")
    return EmbeddingMatrix.from_vectors(vectors)


@dataclass(frozen=True)
class CandidateSet:
    """Top-k target candidates for one source entity, best first."""

    source: int
    candidates: tuple[tuple[int, float], ...]

    @property
    def k(self) -> int:
        return len(self.candidates)

    @property
    def target_ids(self) -> tuple[int, ...]:
        return tuple(tid for tid, _ in self.candidates)


def cosine_scores(vec: np.ndarray, targets: EmbeddingMatrix) -> np.ndarray:
    """Cosine similarity of ``vec`` against every target row.

    Zero-norm vectors score 0 instead of dividing by zero.
    """
    norm = float(np.linalg.norm(vec))
    dots = targets.matrix @ vec
    denom = targets.norms * norm
    return dots / np.where(denom == 0.0, 1.0, denom)


def top_k(
    source: int,
    k: int,
    source_matrix: EmbeddingMatrix,
    target_matrix: EmbeddingMatrix,
) -> CandidateSet:
    """Exact top-k by cosine similarity; ties break by ascending target id."""
    if k < 1 or k > len(target_matrix):
        raise ValueError(f"k={k} out of range for {len(target_matrix)} target vectors")
    scores = cosine_scores(source_matrix.vector(source), target_matrix)
    # rows are in ascending-id order, so a stable sort realizes the tie-break
    order = np.argsort(-scores, kind="stable")[:k]
    return CandidateSet(
        source,
        tuple((target_matrix.ids[row], float(scores[row])) for row in order),
    )


class EmbeddingIndex:
    """Candidate provider backed by a pair of embedding matrices."""

    def __init__(self, source_matrix: EmbeddingMatrix, target_matrix: EmbeddingMatrix):
        self.source_matrix = source_matrix
        self.target_matrix = target_matrix

    def top_k(self, source: int, k: int) -> CandidateSet:
        return top_k(source, k, self.source_matrix, self.target_matrix)


class ScoreTable:
    """Candidate provider backed by precomputed pair scores.

    Accepts the ``source_id TAB target_id TAB score`` TSV. The candidate
    universe of a source is the set of targets scored for it.
    """

    def __init__(self, rows: Mapping[int, Mapping[int, float]]):
        self._rows = {s: dict(ts) for s, ts in rows.items()}

    @classmethod
    def from_tsv(cls, path: str | Path) -> "ScoreTable":
        rows: dict[int, dict[int, float]] = {}
        with open(path, encoding="utf-8") as handle:
            for line_no, raw in enumerate(handle, start=1):
                line = raw.rstrip("\r\n")
                if not line:
                    continue
                fields = line.split("\t")
                if len(fields) != 3:
                    raise ParseError(str(path), line_no, f"expected 3 fields, got {len(fields)}")
                source, target = int(fields[0]), int(fields[1])
                score = float(fields[2])
                if not np.isfinite(score):
                    raise ValueError(f"{path}:{line_no}: non-finite score")
                bucket = rows.setdefault(source, {})
                if target in bucket:
                    raise DuplicateIdError(f"{path}:{line_no}: duplicate pair ({source}, {target})")
                bucket[target] = score
        return cls(rows)

    def top_k(self, source: int, k: int) -> CandidateSet:
        scored = self._rows.get(source)
        if scored is None:
            raise UnknownEntityError(f"no scores for source entity {source}")
        if k < 1 or k > len(scored):
            raise ValueError(f"k={k} out of range for {len(scored)} scored targets")
        ranked = sorted(scored.items(), key=lambda pair: (-pair[1], pair[0]))
        return CandidateSet(source, tuple(ranked[:k]))


class RecallReport(NamedTuple):
    recall: float
    hits: int
    evaluated: int
    skipped: int


def recall_at_k(candidate_sets: Sequence[CandidateSet], gold: Mapping[int, int]) -> RecallReport:
    """Fraction of sources whose gold target appears in their candidate set.

    Sources absent from the gold map are skipped and counted in the report.
    """
    hits = evaluated = skipped = 0
    for candidate_set in candidate_sets:
        target = gold.get(candidate_set.source)
        if target is None:
            skipped += 1
            continue
        evaluated += 1
        if target in candidate_set.target_ids:
            hits += 1
    if evaluated == 0:
        raise EmptyEvalError("no candidate sets with gold targets to evaluate")
    return RecallReport(hits / evaluated, hits, evaluated, skipped)
