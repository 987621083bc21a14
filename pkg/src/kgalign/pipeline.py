"""Per-entity alignment orchestration and batch evaluation.

Each source entity goes through up to two voting stages: attribute-based
reasoning first, then relation-based reasoning if no candidate reached
consensus. A stage is skipped when the source or all of its candidates
lack triples of that kind. When both stages end without a winner the
fallback policy either emits the top-similarity candidate (flagged as
such) or leaves the entity unresolved.
"""

from __future__ import annotations

import itertools
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, NamedTuple, Sequence

from .errors import EmptyEvalError, RunAbortedError
from .gateway import GatewayBase
from .kg import KnowledgeGraph
from .prompts import Prompt, PromptKind, build_prompt
from .retrieval import CandidateSet
from .selection import SelectedTriples, TripleKind, TripleSelector
from .voting import VoteConfig, VoteOutcome, derive_seed, run_vote

FALLBACK_TOP_SIMILARITY = "top_similarity"
FALLBACK_NONE = "none"

ORDER_SIMILARITY = "similarity"
ORDER_RANDOM = "random"
ORDER_REVERSED = "reversed"


class Stage(Enum):
    ATTRIBUTE = "attribute"
    RELATION = "relation"
    KNOWLEDGE = "knowledge"
    FALLBACK = "fallback"
    UNRESOLVED = "unresolved"


_STAGE_OF_KIND = {
    PromptKind.ATTRIBUTE: Stage.ATTRIBUTE,
    PromptKind.RELATION: Stage.RELATION,
    PromptKind.KNOWLEDGE: Stage.KNOWLEDGE,
}


@dataclass(frozen=True)
class AlignmentDecision:
    source: int
    predicted: int | None
    stage: Stage
    vote_outcomes: Mapping[str, VoteOutcome]


@dataclass(frozen=True)
class PipelineConfig:
    k_candidates: int = 10
    k_attributes: int = 5
    k_relations: int = 5
    vote: VoteConfig = field(default_factory=VoteConfig)
    fallback: str = FALLBACK_TOP_SIMILARITY
    prompt_kinds: tuple[PromptKind, ...] = (PromptKind.ATTRIBUTE, PromptKind.RELATION)
    candidate_order: str = ORDER_SIMILARITY
    order_seed: int = 0
    concurrency: int = 4
    prompt_template: str | None = None

    def __post_init__(self):
        for name in ("k_candidates", "k_attributes", "k_relations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.fallback not in (FALLBACK_TOP_SIMILARITY, FALLBACK_NONE):
            raise ValueError(f"unknown fallback policy {self.fallback!r}")
        if self.candidate_order not in (ORDER_SIMILARITY, ORDER_RANDOM, ORDER_REVERSED):
            raise ValueError(f"unknown candidate order {self.candidate_order!r}")


def _reorder(candidates: CandidateSet, mode: str, seed: int) -> CandidateSet:
    if mode == ORDER_SIMILARITY:
        return candidates
    entries = list(candidates.candidates)
    if mode == ORDER_REVERSED:
        entries.reverse()
    else:
        random.Random(derive_seed(seed, candidates.source)).shuffle(entries)
    return CandidateSet(candidates.source, tuple(entries))


def _stage_available(
    kind: PromptKind,
    source: int,
    candidate_ids: Sequence[int],
    source_kg: KnowledgeGraph,
    target_kg: KnowledgeGraph,
) -> bool:
    if kind is PromptKind.KNOWLEDGE:
        return True
    if kind is PromptKind.ATTRIBUTE:
        if not source_kg.attributes_of(source):
            return False
        return any(target_kg.attributes_of(c) for c in candidate_ids)
    if not source_kg.outgoing(source):
        return False
    return any(target_kg.outgoing(c) for c in candidate_ids)


def align_entity(
    source: int,
    config: PipelineConfig,
    source_kg: KnowledgeGraph,
    target_kg: KnowledgeGraph,
    index,
    selector: TripleSelector,
    gateway: GatewayBase,
) -> AlignmentDecision:
    """Decide one source entity's alignment.

    ``index`` is any candidate provider with a ``top_k(source, k)``
    method. Voting seeds derive from the configured seed and the source
    id, so batch results do not depend on scheduling order.
    """
    base = index.top_k(source, config.k_candidates)
    vote_set = _reorder(base, config.candidate_order, config.order_seed)
    candidate_ids = vote_set.target_ids
    vote_config = VoteConfig(
        n=config.vote.n,
        seed=derive_seed(config.vote.seed, source),
        identity_first=config.vote.identity_first,
    )

    outcomes: dict[str, VoteOutcome] = {}
    for kind in config.prompt_kinds:
        if not _stage_available(kind, source, candidate_ids, source_kg, target_kg):
            continue
        builder = _prompt_builder(
            kind, source, source_kg, target_kg, selector, candidate_ids, config
        )
        outcome = run_vote(source, vote_set, kind, vote_config, gateway, builder)
        outcomes[kind.value] = outcome
        if outcome.decided:
            return AlignmentDecision(source, outcome.winner, _STAGE_OF_KIND[kind], outcomes)

    if config.fallback == FALLBACK_TOP_SIMILARITY:
        return AlignmentDecision(source, base.candidates[0][0], Stage.FALLBACK, outcomes)
    return AlignmentDecision(source, None, Stage.UNRESOLVED, outcomes)


def _prompt_builder(
    kind: PromptKind,
    source: int,
    source_kg: KnowledgeGraph,
    target_kg: KnowledgeGraph,
    selector: TripleSelector,
    candidate_ids: Sequence[int],
    config: PipelineConfig,
):
    source_triples: SelectedTriples | None = None
    candidate_triples: dict[int, SelectedTriples] | None = None
    if kind is not PromptKind.KNOWLEDGE:
        triple_kind = TripleKind.ATTRIBUTE if kind is PromptKind.ATTRIBUTE else TripleKind.RELATION
        k = config.k_attributes if kind is PromptKind.ATTRIBUTE else config.k_relations
        source_triples = selector.select_top_triples(source, candidate_ids, triple_kind, k)
        candidate_triples = {
            c: selector.select_top_triples(c, candidate_ids, triple_kind, k, side="target")
            for c in candidate_ids
        }

    def build(ordered: Sequence[int]) -> Prompt:
        return build_prompt(
            kind,
            source,
            ordered,
            source_kg,
            target_kg,
            source_triples=source_triples,
            candidate_triples=candidate_triples,
            template=config.prompt_template,
        )

    return build


def preview_prompts(
    source: int,
    config: PipelineConfig,
    source_kg: KnowledgeGraph,
    target_kg: KnowledgeGraph,
    index,
    selector: TripleSelector,
) -> list[Prompt]:
    """Render each available stage's round-0 prompt without any gateway call."""
    from .voting import sample_permutations

    base = index.top_k(source, config.k_candidates)
    vote_set = _reorder(base, config.candidate_order, config.order_seed)
    ids = vote_set.target_ids
    prompts = []
    for kind in config.prompt_kinds:
        if not _stage_available(kind, source, ids, source_kg, target_kg):
            continue
        builder = _prompt_builder(kind, source, source_kg, target_kg, selector, ids, config)
        perm = sample_permutations(
            len(ids), config.vote.n, derive_seed(config.vote.seed, source), config.vote.identity_first
        )[0]
        prompts.append(builder([ids[p] for p in perm]))
    return prompts


@dataclass(frozen=True)
class AlignmentRun:
    decisions: list[AlignmentDecision]
    aborted: list[tuple[int, str]]


def align_all(
    sources: Sequence[int],
    config: PipelineConfig,
    source_kg: KnowledgeGraph,
    target_kg: KnowledgeGraph,
    index,
    selector: TripleSelector,
    gateway: GatewayBase,
    progress: Callable[[int, int], None] | None = None,
) -> AlignmentRun:
    """Align a batch of source entities.

    Entities run concurrently up to ``config.concurrency``; the decision
    list follows input order regardless of completion order. Sources that
    abort by transport are recorded and the batch continues. ``progress``
    is called with (done, total) as entities complete.
    """
    if not sources:
        return AlignmentRun([], [])
    selector.prime()  # freeze shared caches before threads start reading
    done = itertools.count(1)

    def one(source: int):
        try:
            result = align_entity(
                source, config, source_kg, target_kg, index, selector, gateway
            )
        except RunAbortedError as exc:
            result = (source, str(exc))
        if progress is not None:
            progress(next(done), len(sources))
        return result

    with ThreadPoolExecutor(max_workers=max(1, config.concurrency)) as pool:
        results = list(pool.map(one, sources))
    decisions = [r for r in results if isinstance(r, AlignmentDecision)]
    aborted = [r for r in results if not isinstance(r, AlignmentDecision)]
    return AlignmentRun(decisions, aborted)


class EvalReport(NamedTuple):
    hits_at_1: float
    decided_hits_at_1: float | None
    correct: int
    total: int
    decided: int
    stage_counts: dict[str, int]


def hits_at_1(decisions: Sequence[AlignmentDecision], gold: Mapping[int, int]) -> float:
    """Strict Hits@1: unresolved entities count as incorrect."""
    if not decisions:
        raise EmptyEvalError("no decisions to evaluate")
    correct = 0
    for decision in decisions:
        if decision.source not in gold:
            raise KeyError(f"gold alignment missing for decided source {decision.source}")
        if decision.predicted == gold[decision.source]:
            correct += 1
    return correct / len(decisions)


def evaluate(decisions: Sequence[AlignmentDecision], gold: Mapping[int, int]) -> EvalReport:
    """Strict Hits@1 plus the decided-only rate and per-stage counts."""
    strict = hits_at_1(decisions, gold)
    decided = [d for d in decisions if d.predicted is not None]
    decided_rate = (
        sum(1 for d in decided if d.predicted == gold[d.source]) / len(decided)
        if decided
        else None
    )
    stage_counts: dict[str, int] = {}
    for decision in decisions:
        stage_counts[decision.stage.value] = stage_counts.get(decision.stage.value, 0) + 1
    return EvalReport(
        hits_at_1=strict,
        decided_hits_at_1=decided_rate,
        correct=round(strict * len(decisions)),
        total=len(decisions),
        decided=len(decided),
        stage_counts=stage_counts,
    )


def decision_record(decision: AlignmentDecision) -> dict:
    """JSON-serializable view of one decision, audit-complete."""
    votes = {}
    for kind, outcome in decision.vote_outcomes.items():
        votes[kind] = {
            "n": outcome.n,
            "threshold": outcome.threshold,
            "seed": outcome.seed,
            "winner": outcome.winner,
            "tally": {str(t): c for t, c in sorted(outcome.tally.items())},
            "transport_failures": outcome.transport_failures,
            "rounds": [
                {
                    "permutation": list(r.permutation),
                    "chosen_index": None if r.choice is None or not r.choice.chosen else r.choice.index,
                    "target": r.target,
                    "failed": r.choice is None,
                }
                for r in outcome.rounds
            ],
        }
    return {
        "source": decision.source,
        "predicted": decision.predicted,
        "stage": decision.stage.value,
        "votes": votes,
    }


def write_decisions(decisions: Sequence[AlignmentDecision], path: str | Path) -> None:
    """Write one decision per line, deterministically serialized."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for decision in decisions:
            handle.write(json.dumps(decision_record(decision), sort_keys=True, ensure_ascii=False))
            handle.write("\n")
