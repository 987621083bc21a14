"""Run configuration: config file parsing, defaults, and dataset wiring.

Config files are plain ``key = value`` text with ``#`` comments. Command
line flags override file values. The API key is never read from a file;
it comes from the ``KGALIGN_API_KEY`` environment variable.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .errors import KgAlignError
from .gateway import (
    FirstOptionOracle,
    FixedAnswerOracle,
    GatewayBase,
    GatewayConfig,
    HttpGateway,
    PositionBiasedOracle,
    TruthfulOracle,
)
from .kg import KnowledgeGraph, load_graph, load_snapshot, parse_gold, save_snapshot
from .pipeline import PipelineConfig
from .prompts import PromptKind, load_template
from .retrieval import EmbeddingIndex, ScoreTable, load_embeddings
from .voting import VoteConfig


class UsageError(KgAlignError):
    """Bad flags, bad config values, or missing input files."""


API_KEY_ENV = "KGALIGN_API_KEY"

DEFAULT_BIAS = (4.0, 2.0, 1.0)  # front-loaded positional preference

_DATASET_FILES = {
    "source_entities": "ent_ids_1",
    "source_triples": "triples_1",
    "source_attributes": "att_triples_1",
    "source_relation_names": "rel_ids_1",
    "target_entities": "ent_ids_2",
    "target_triples": "triples_2",
    "target_attributes": "att_triples_2",
    "target_relation_names": "rel_ids_2",
    "gold": "ref_ent_ids",
    "source_embeddings": "emb_1.txt",
    "target_embeddings": "emb_2.txt",
}

_OPTIONAL_FILES = {"source_relation_names", "target_relation_names"}


@dataclass
class RunConfig:
    data_dir: str | None = None
    paths: dict = field(default_factory=dict)  # per-file overrides, keys of _DATASET_FILES
    score_file: str | None = None

    endpoint: str | None = None
    model: str = "scripted-oracle"
    temperature: float = 0.0
    max_tokens: int = 16
    timeout: float = 30.0
    retries: int = 3
    gateway_concurrency: int = 8
    requests_per_second: float | None = None
    allow_remote: bool = False

    oracle: str = "truthful"
    fixed_answer: str = "Unable to decide."
    bias: tuple[float, ...] = DEFAULT_BIAS

    k_candidates: int = 10
    k_attributes: int = 5
    k_relations: int = 5
    votes: int = 5
    seed: int = 0
    identity_first: bool = True
    fallback: str = "top_similarity"
    order: str = "similarity"
    prompt_kinds: str = "attribute,relation"
    prompt_template: str | None = None
    concurrency: int = 4

    out_dir: str = "out"
    limit: int | None = None
    use_snapshot: bool = True


_BOOL_KEYS = {"identity_first", "allow_remote", "use_snapshot"}
_INT_KEYS = {
    "k_candidates", "k_attributes", "k_relations", "votes", "seed",
    "max_tokens", "retries", "gateway_concurrency", "concurrency", "limit",
}
_FLOAT_KEYS = {"temperature", "timeout", "requests_per_second"}


def parse_config_file(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{line_no}: expected 'key = value'")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _parse_bool(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {value!r}")


def build_run_config(file_values: dict[str, str], overrides: dict) -> RunConfig:
    """Merge config-file values and CLI overrides onto the defaults."""
    config = RunConfig()
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for key, raw in file_values.items():
        if key in _DATASET_FILES:
            config.paths[key] = raw
            continue
        if key == "bias":
            config.bias = tuple(float(w) for w in raw.split(","))
            continue
        if key not in known:
            raise UsageError(f"unknown config key {key!r}")
        if key in _BOOL_KEYS:
            setattr(config, key, _parse_bool(raw))
        elif key in _INT_KEYS:
            setattr(config, key, int(raw))
        elif key in _FLOAT_KEYS:
            setattr(config, key, float(raw))
        else:
            setattr(config, key, raw)
    for key, value in overrides.items():
        if value is None:
            continue
        if key in _DATASET_FILES:
            config.paths[key] = value
        else:
            setattr(config, key, value)
    return config


class DatasetPaths(NamedTuple):
    source_entities: Path
    source_triples: Path
    source_attributes: Path
    source_relation_names: Path | None
    target_entities: Path
    target_triples: Path
    target_attributes: Path
    target_relation_names: Path | None
    gold: Path
    source_embeddings: Path | None
    target_embeddings: Path | None


def resolve_paths(config: RunConfig, need_embeddings: bool = True) -> DatasetPaths:
    """Locate every dataset file, rejecting missing required ones."""
    base = Path(config.data_dir) if config.data_dir else None
    resolved: dict[str, Path | None] = {}
    for key, default_name in _DATASET_FILES.items():
        override = config.paths.get(key)
        if override:
            path = Path(override)
        elif base is not None:
            path = base / default_name
        else:
            path = None
        optional = key in _OPTIONAL_FILES or (
            key.endswith("embeddings") and (not need_embeddings or config.score_file)
        )
        if path is None or not path.is_file():
            if optional:
                path = None
            else:
                raise UsageError(f"required dataset file missing: {path or key}")
        resolved[key] = path
    return DatasetPaths(**resolved)


class Dataset(NamedTuple):
    source: KnowledgeGraph
    target: KnowledgeGraph
    gold: dict[int, int]
    skipped: tuple[int, int]


def load_dataset(config: RunConfig, paths: DatasetPaths) -> Dataset:
    """Parse both KG sides and the gold alignment, via snapshot if fresh."""
    snapshot_path = (
        Path(config.data_dir) / "graphs.snapshot" if config.data_dir else None
    )
    if config.use_snapshot and snapshot_path is not None:
        cached = load_snapshot(snapshot_path)
        if isinstance(cached, Dataset):
            return cached
    source, source_skipped = load_graph(
        paths.source_entities,
        paths.source_triples,
        paths.source_attributes,
        relation_names_path=paths.source_relation_names,
    )
    target, target_skipped = load_graph(
        paths.target_entities,
        paths.target_triples,
        paths.target_attributes,
        relation_names_path=paths.target_relation_names,
    )
    gold = parse_gold(paths.gold)
    dataset = Dataset(source, target, gold, (source_skipped, target_skipped))
    if config.use_snapshot and snapshot_path is not None:
        sources = [
            p
            for p in (
                paths.source_entities, paths.source_triples, paths.source_attributes,
                paths.target_entities, paths.target_triples, paths.target_attributes,
                paths.gold,
            )
            if p is not None
        ]
        save_snapshot(snapshot_path, dataset, sources)
    return dataset


def build_index(config: RunConfig, paths: DatasetPaths):
    """Candidate provider: precomputed scores when configured, else embeddings."""
    if config.score_file:
        return ScoreTable.from_tsv(config.score_file)
    if paths.source_embeddings is None or paths.target_embeddings is None:
        raise UsageError("embeddings required: set data_dir, *_embeddings, or score_file")
    return EmbeddingIndex(
        load_embeddings(paths.source_embeddings),
        load_embeddings(paths.target_embeddings),
    )


def parse_prompt_kinds(value: str) -> tuple[PromptKind, ...]:
    kinds = []
    for name in value.split(","):
        name = name.strip()
        if not name:
            continue
        try:
            kinds.append(PromptKind(name))
        except ValueError:
            raise UsageError(
                f"unknown prompt kind {name!r}; expected knowledge, attribute, or relation"
            ) from None
    if not kinds:
        raise UsageError("no prompt kinds configured")
    return tuple(kinds)


def build_pipeline_config(config: RunConfig) -> PipelineConfig:
    template = load_template(config.prompt_template) if config.prompt_template else None
    try:
        return PipelineConfig(
            k_candidates=config.k_candidates,
            k_attributes=config.k_attributes,
            k_relations=config.k_relations,
            vote=VoteConfig(n=config.votes, seed=config.seed, identity_first=config.identity_first),
            fallback=config.fallback,
            prompt_kinds=parse_prompt_kinds(config.prompt_kinds),
            candidate_order=config.order,
            order_seed=config.seed,
            concurrency=config.concurrency,
            prompt_template=template,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def build_gateway(config: RunConfig, gold: dict[int, int], audit_path=None) -> GatewayBase:
    """Oracle gateway by default; a remote endpoint needs --allow-remote."""
    if config.endpoint:
        if not config.allow_remote:
            raise UsageError(
                "refusing to call a remote endpoint without --allow-remote"
            )
        return HttpGateway(
            GatewayConfig(
                endpoint=config.endpoint,
                model=config.model,
                api_key=os.environ.get(API_KEY_ENV),
                temperature=config.temperature,
                max_tokens=config.max_tokens,
                seed=config.seed,
                timeout=config.timeout,
                retries=config.retries,
                concurrency=config.gateway_concurrency,
                requests_per_second=config.requests_per_second,
            ),
            audit_path=audit_path,
        )
    mode, _, argument = config.oracle.partition(":")
    if mode == "truthful":
        return TruthfulOracle(gold, audit_path=audit_path)
    if mode == "first":
        return FirstOptionOracle(audit_path=audit_path)
    if mode == "fixed":
        return FixedAnswerOracle(argument or config.fixed_answer, audit_path=audit_path)
    if mode == "biased":
        bias = tuple(float(w) for w in argument.split(",")) if argument else config.bias
        return PositionBiasedOracle(bias, seed=config.seed, audit_path=audit_path)
    raise UsageError(f"unknown oracle {config.oracle!r}")
