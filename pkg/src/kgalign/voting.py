"""Multi-round voting over permuted candidate orders.

One vote asks the same multiple-choice question n times, each round with
the options in a different sampled permutation, and accepts the target
whose round count reaches floor(n/2) and uniquely tops the tally. Ties
at the maximum and under-threshold maxima produce no winner, which the
pipeline treats as "move to the next stage".

Reordering the options between rounds is what converts a model's
positional bias into noise instead of a systematic winner.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .errors import RunAbortedError, TransportError
from .gateway import ChoiceResult, GatewayBase
from .prompts import Prompt, PromptKind
from .retrieval import CandidateSet

logger = logging.getLogger(__name__)

MAX_VOTE_WORKERS = 8


@dataclass(frozen=True)
class VoteConfig:
    """Vote shape: round count n, permutation seed, identity-order pin.

    The acceptance threshold is always floor(n/2) of the configured n,
    even when fewer rounds run. ``identity_first`` keeps the similarity
    order present in exactly one round; disable it for unbiased
    permutation sampling.
    """

    n: int = 5
    seed: int = 0
    identity_first: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"vote rounds must be >= 1, got {self.n}")

    @property
    def threshold(self) -> int:
        return self.n // 2


@dataclass(frozen=True)
class VoteRound:
    permutation: tuple[int, ...]
    choice: ChoiceResult | None  # None when the round failed by transport
    target: int | None


@dataclass(frozen=True)
class VoteOutcome:
    source: int
    kind: PromptKind
    n: int
    threshold: int
    seed: int
    rounds: tuple[VoteRound, ...]
    tally: Mapping[int, int] = field(default_factory=dict)
    winner: int | None = None
    transport_failures: int = 0

    @property
    def decided(self) -> bool:
        return self.winner is not None


def derive_seed(base: int, source: int) -> int:
    """Stable per-source seed so batch runs reproduce across processes."""
    digest = hashlib.sha256(f"{base}:{source}".encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big")


def sample_permutations(
    m: int, n: int, seed: int, identity_first: bool = True
) -> list[tuple[int, ...]]:
    """Sample n distinct permutations of range(m), deterministic under seed.

    When n exceeds m!, all m! permutations are returned and a cap warning
    is logged. With ``identity_first`` the identity permutation occupies
    round 0 and the remainder are sampled uniformly from the rest.
    """
    if m < 1:
        raise ValueError(f"candidate count must be >= 1, got {m}")
    total = math.factorial(m)
    if n >= total:
        if n > total:
            logger.warning(
                "requested %d permutations but only %d exist for m=%d; capping", n, total, m
            )
        perms = [tuple(p) for p in itertools.permutations(range(m))]
        identity = tuple(range(m))
        perms.remove(identity)
        return [identity] + perms

    rng = random.Random(seed)
    identity = tuple(range(m))
    perms: list[tuple[int, ...]] = [identity] if identity_first else []
    seen = set(perms)
    while len(perms) < n:
        candidate = tuple(rng.sample(range(m), m))
        if candidate not in seen:
            seen.add(candidate)
            perms.append(candidate)
    return perms


def tally(choices: Sequence[int], n: int, threshold: int | None = None) -> int | None:
    """Decide a winner from the parsed round choices.

    Returns the target id whose count uniquely tops the tally and reaches
    the threshold (default floor(n/2)), else None.
    """
    if len(choices) > n:
        raise ValueError(f"{len(choices)} choices exceed n={n} rounds")
    if threshold is None:
        threshold = n // 2
    if not choices:
        return None
    counts: dict[int, int] = {}
    for choice in choices:
        counts[choice] = counts.get(choice, 0) + 1
    best = max(counts.values())
    leaders = [target for target, count in counts.items() if count == best]
    if len(leaders) == 1 and best >= threshold:
        return leaders[0]
    return None


def run_vote(
    source: int,
    candidates: CandidateSet,
    kind: PromptKind,
    config: VoteConfig,
    gateway: GatewayBase,
    build: Callable[[Sequence[int]], Prompt],
) -> VoteOutcome:
    """Run one multi-round vote for one source entity.

    ``build`` renders a prompt for a given candidate order; each sampled
    permutation gets one round, issued concurrently through the gateway.
    Rounds that fail by transport count as abstentions; if more than half
    of the configured rounds fail that way the vote aborts.
    """
    ids = candidates.target_ids
    if not ids:
        raise ValueError(f"source {source} has no candidates to vote over")
    perms = sample_permutations(len(ids), config.n, config.seed, config.identity_first)

    def one_round(index: int, perm: tuple[int, ...]) -> VoteRound:
        ordered = [ids[p] for p in perm]
        prompt = build(ordered)
        try:
            choice = gateway.ask(prompt, source=source, round_index=index)
        except TransportError:
            return VoteRound(perm, None, None)
        target = ordered[choice.index] if choice.chosen else None
        return VoteRound(perm, choice, target)

    with ThreadPoolExecutor(max_workers=min(len(perms), MAX_VOTE_WORKERS)) as pool:
        rounds = list(pool.map(one_round, range(len(perms)), perms))

    failures = sum(1 for r in rounds if r.choice is None)
    if failures > config.n / 2:
        raise RunAbortedError(source, f"{failures} of {config.n} rounds failed by transport")

    voted = [r.target for r in rounds if r.target is not None]
    counts: dict[int, int] = {}
    for target in voted:
        counts[target] = counts.get(target, 0) + 1
    winner = tally(voted, config.n, config.threshold)
    return VoteOutcome(
        source=source,
        kind=kind,
        n=config.n,
        threshold=config.threshold,
        seed=config.seed,
        rounds=tuple(rounds),
        tally=counts,
        winner=winner,
        transport_failures=failures,
    )
