"""Entity alignment across knowledge graphs.

Combines embedding-based candidate retrieval, identifiability-scored
triple selection, and multi-round multiple-choice voting through an LLM
gateway to pick one aligned target entity per source entity.
"""

from .errors import KgAlignError
from .gateway import (
    ChoiceResult,
    CompletionRequest,
    FirstOptionOracle,
    FixedAnswerOracle,
    GatewayBase,
    GatewayConfig,
    HttpGateway,
    PositionBiasedOracle,
    TruthfulOracle,
    parse_choice,
)
from .kg import (
    AttributeTriple,
    EntityRef,
    GraphStats,
    KnowledgeGraph,
    RelationalTriple,
    build_graph,
    load_graph,
    parse_gold,
)
from .pipeline import (
    AlignmentDecision,
    AlignmentRun,
    PipelineConfig,
    Stage,
    align_all,
    align_entity,
    evaluate,
    hits_at_1,
    write_decisions,
)
from .prompts import Prompt, PromptKind, build_prompt, option_label_for
from .retrieval import (
    CandidateSet,
    EmbeddingIndex,
    EmbeddingMatrix,
    ScoreTable,
    load_embeddings,
    recall_at_k,
    top_k,
)
from .selection import IdentifiabilityScore, SelectedTriples, TripleKind, TripleSelector
from .voting import VoteConfig, VoteOutcome, run_vote, sample_permutations, tally

__version__ = "0.1.0"

__all__ = [
    "AlignmentDecision",
    "AlignmentRun",
    "AttributeTriple",
    "CandidateSet",
    "ChoiceResult",
    "CompletionRequest",
    "EmbeddingIndex",
    "EmbeddingMatrix",
    "EntityRef",
    "FirstOptionOracle",
    "FixedAnswerOracle",
    "GatewayBase",
    "GatewayConfig",
    "GraphStats",
    "HttpGateway",
    "IdentifiabilityScore",
    "KgAlignError",
    "KnowledgeGraph",
    "PipelineConfig",
    "PositionBiasedOracle",
    "Prompt",
    "PromptKind",
    "RelationalTriple",
    "ScoreTable",
    "SelectedTriples",
    "Stage",
    "TripleKind",
    "TripleSelector",
    "TruthfulOracle",
    "VoteConfig",
    "VoteOutcome",
    "align_all",
    "align_entity",
    "build_graph",
    "build_prompt",
    "evaluate",
    "hits_at_1",
    "load_embeddings",
    "load_graph",
    "option_label_for",
    "parse_choice",
    "parse_gold",
    "recall_at_k",
    "run_vote",
    "sample_permutations",
    "tally",
    "top_k",
    "write_decisions",
]
