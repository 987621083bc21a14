"""Deterministic rendering of multiple-choice alignment prompts.

Three prompt families share one shape: a task instruction, a source
entity block, and lettered candidate options in the caller's order.
Name-only prompts carry just entity names; attribute and relation
prompts add the selected triples as ``name | subject | object`` lines,
one per line, in selection order.

The only text transformation applied anywhere is literal truncation:
values longer than 120 characters are cut and marked with an ellipsis
so long abstracts cannot dominate the context window.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .errors import EmptyCandidatesError, TooManyOptionsError
from .kg import KnowledgeGraph
from .selection import SelectedTriples, TripleKind

MAX_LITERAL_LEN = 120
ELLIPSIS = "…"

# A..Z then AA..ZZ, spreadsheet style; large candidate-size experiments
# need more than 26 options.
MAX_OPTIONS = 26 + 26 * 26

INSTRUCTION = (
    "You are given a source entity and a list of candidate entities. "
    "Select the candidate that refers to the same real-world entity as the source. "
    "Answer with the option letter only."
)

DEFAULT_TEMPLATE = "{instruction}\n\nSource entity:\n{source_block}\n\nCandidates:\n{options}\n"

PLACEHOLDERS = ("{instruction}", "{source_block}", "{options}")


class PromptKind(Enum):
    KNOWLEDGE = "knowledge"
    ATTRIBUTE = "attribute"
    RELATION = "relation"


@dataclass(frozen=True)
class PromptOption:
    letter: str
    target: int
    label: str
    block: str


@dataclass(frozen=True)
class Prompt:
    kind: PromptKind
    instruction: str
    source_block: str
    options: tuple[PromptOption, ...]
    rendered: str


def option_label_for(index: int) -> str:
    if 0 <= index < 26:
        return string.ascii_uppercase[index]
    if 26 <= index < MAX_OPTIONS:
        first, second = divmod(index - 26, 26)
        return string.ascii_uppercase[first] + string.ascii_uppercase[second]
    raise TooManyOptionsError(f"option index {index} outside A..ZZ")


def truncate_literal(value: str) -> str:
    if len(value) > MAX_LITERAL_LEN:
        return value[:MAX_LITERAL_LEN] + ELLIPSIS
    return value


def load_template(path: str | Path) -> str:
    template = Path(path).read_text(encoding="utf-8")
    missing = [p for p in PLACEHOLDERS if p not in template]
    if missing:
        raise ValueError(f"template {path} lacks placeholders: {', '.join(missing)}")
    return template


def _entity_block(
    kind: PromptKind,
    name: str,
    kg: KnowledgeGraph,
    selected: SelectedTriples | None,
) -> str:
    if kind is PromptKind.KNOWLEDGE:
        return name
    lines = [name]
    if selected is None or selected.empty:
        placeholder = (
            "(no attributes available)"
            if kind is PromptKind.ATTRIBUTE
            else "(no relations available)"
        )
        lines.append(placeholder)
        return "\n".join(lines)
    for triple, _ in selected.triples:
        if selected.kind is TripleKind.ATTRIBUTE:
            lines.append(
                f"{name} | {kg.attribute_label(triple.attribute)} | {truncate_literal(triple.value)}"
            )
        else:
            lines.append(
                f"{name} | {kg.relation_label(triple.relation)} | {kg.label(triple.tail)}"
            )
    return "\n".join(lines)


def build_prompt(
    kind: PromptKind,
    source: int,
    candidates: Sequence[int],
    source_kg: KnowledgeGraph,
    target_kg: KnowledgeGraph,
    source_triples: SelectedTriples | None = None,
    candidate_triples: Mapping[int, SelectedTriples] | None = None,
    template: str | None = None,
) -> Prompt:
    """Render one prompt; ``candidates`` fixes the option order.

    Attribute and relation prompts require selections for the source and
    every candidate (empty selections are allowed and render a
    placeholder line).
    """
    if not candidates:
        raise EmptyCandidatesError(f"no candidates for source entity {source}")
    if len(candidates) > MAX_OPTIONS:
        raise TooManyOptionsError(
            f"{len(candidates)} candidates exceed {MAX_OPTIONS} option labels"
        )
    if kind is not PromptKind.KNOWLEDGE:
        if source_triples is None:
            raise ValueError(f"{kind.value} prompts need selected triples for the source")
        missing = [c for c in candidates if candidate_triples is None or c not in candidate_triples]
        if missing:
            raise ValueError(f"{kind.value} prompts need selected triples for candidates {missing}")

    source_block = _entity_block(kind, source_kg.label(source), source_kg, source_triples)
    options = []
    for index, target in enumerate(candidates):
        label = target_kg.label(target)
        selected = candidate_triples[target] if kind is not PromptKind.KNOWLEDGE else None
        block = _entity_block(kind, label, target_kg, selected)
        options.append(PromptOption(option_label_for(index), target, label, block))

    option_lines = []
    for option in options:
        first, *rest = option.block.split("\n")
        option_lines.append(f"{option.letter}. {first}")
        option_lines.extend(rest)
    rendered = (template or DEFAULT_TEMPLATE).format(
        instruction=INSTRUCTION,
        source_block=source_block,
        options="\n".join(option_lines),
    )
    return Prompt(kind, INSTRUCTION, source_block, tuple(options), rendered)
