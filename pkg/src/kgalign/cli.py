"""Command-line surface: ingestion, retrieval, alignment, and experiments.

Subcommands: ingest, candidates, align, exp-order, exp-size, gen-fixture.
Exit codes: 0 success, 2 usage or configuration, 3 data integrity,
4 gateway exhaustion.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import (
    RunConfig,
    UsageError,
    build_gateway,
    build_index,
    build_pipeline_config,
    build_run_config,
    load_dataset,
    parse_config_file,
    resolve_paths,
)
from .errors import (
    ApiError,
    DanglingReferenceError,
    DuplicateIdError,
    EmptyEvalError,
    IntegrityError,
    ParseError,
    RunAbortedError,
    ShapeError,
    TransportError,
    UnknownEntityError,
)
from .fixtures import FixtureSpec, generate_fixture
from .pipeline import align_all, evaluate, preview_prompts, write_decisions
from .retrieval import recall_at_k
from .selection import TripleSelector

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_GATEWAY = 4

_DATA_ERRORS = (
    ParseError,
    DuplicateIdError,
    DanglingReferenceError,
    IntegrityError,
    ShapeError,
    UnknownEntityError,
    EmptyEvalError,
)
_GATEWAY_ERRORS = (TransportError, ApiError, RunAbortedError)


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--data-dir", dest="data_dir", help="dataset directory")
    parser.add_argument("--out", dest="out_dir", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, help="base seed for permutations and ordering")
    parser.add_argument("--k", dest="k_candidates", type=int, help="candidate set size")
    parser.add_argument("--votes", type=int, help="voting rounds per stage")
    parser.add_argument(
        "--oracle",
        help="scripted gateway: truthful | first | fixed:TEXT | biased[:w1,w2,...]",
    )
    parser.add_argument("--endpoint", help="chat-completions endpoint URL")
    parser.add_argument("--model", help="model name sent to the endpoint")
    parser.add_argument(
        "--allow-remote",
        action="store_true",
        default=None,
        help="required before any remote endpoint is called",
    )
    parser.add_argument("--limit", type=int, help="align at most N source entities")
    parser.add_argument("--fallback", choices=["top_similarity", "none"])
    parser.add_argument("--order", choices=["similarity", "random", "reversed"])
    parser.add_argument(
        "--kind",
        dest="prompt_kinds",
        help="comma-separated prompt kinds (knowledge, attribute, relation)",
    )
    parser.add_argument(
        "--template",
        dest="prompt_template",
        help="prompt template file with {instruction}, {source_block}, {options}",
    )
    parser.add_argument(
        "--no-identity-first",
        dest="identity_first",
        action="store_false",
        default=None,
        help="sample all permutations uniformly instead of pinning round 0",
    )
    parser.add_argument(
        "--no-snapshot",
        dest="use_snapshot",
        action="store_false",
        default=None,
        help="always cold-parse instead of using the binary snapshot",
    )


def _run_config(args: argparse.Namespace, **extra) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {
        key: getattr(args, key)
        for key in (
            "data_dir", "out_dir", "seed", "k_candidates", "votes", "oracle",
            "endpoint", "model", "allow_remote", "limit", "fallback", "order",
            "prompt_kinds", "prompt_template", "identity_first", "use_snapshot",
        )
        if hasattr(args, key)
    }
    overrides.update(extra)
    return build_run_config(file_values, overrides)


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sources(config: RunConfig, gold: dict[int, int]) -> list[int]:
    sources = sorted(gold)
    if config.limit is not None:
        sources = sources[: config.limit]
    if not sources:
        raise UsageError("gold alignment is empty; nothing to align")
    return sources


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _run_config(args)
    paths = resolve_paths(config, need_embeddings=False)
    dataset = load_dataset(config, paths)
    for name, graph, skipped in (
        ("source", dataset.source, dataset.skipped[0]),
        ("target", dataset.target, dataset.skipped[1]),
    ):
        s = graph.stats()
        print(
            f"{name}: entities={s.entity_count} relations={s.relation_count} "
            f"attributes={s.attribute_count} rel_triples={s.rel_triple_count} "
            f"att_triples={s.att_triple_count} (skipped {skipped} attribute lines)"
        )
    print(f"gold pairs: {len(dataset.gold)}")
    return EXIT_OK


def cmd_candidates(args: argparse.Namespace) -> int:
    config = _run_config(args)
    paths = resolve_paths(config)
    dataset = load_dataset(config, paths)
    index = build_index(config, paths)
    sources = _sources(config, dataset.gold)
    sets = []
    for source in sources:
        try:
            sets.append(index.top_k(source, config.k_candidates))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    out = _out_dir(config)
    table = out / "candidates.tsv"
    with open(table, "w", encoding="utf-8", newline="\n") as handle:
        for candidate_set in sets:
            for target, score in candidate_set.candidates:
                handle.write(f"{candidate_set.source}\t{target}\t{score:.6f}\n")
    report = recall_at_k(sets, dataset.gold)
    print(f"wrote {table} ({len(sets)} sources x k={config.k_candidates})")
    print(
        f"recall@{config.k_candidates} = {report.recall:.4f} "
        f"(evaluated={report.evaluated}, skipped={report.skipped})"
    )
    return EXIT_OK


def _print_metrics(run, gold) -> None:
    if not run.decisions:
        print("no decisions produced")
        return
    report = evaluate(run.decisions, gold)
    print(f"hits@1 = {report.hits_at_1:.4f} (strict; {report.correct}/{report.total})")
    if report.decided_hits_at_1 is not None:
        print(f"hits@1 (decided only) = {report.decided_hits_at_1:.4f} over {report.decided}")
    stages = " ".join(f"{name}={count}" for name, count in sorted(report.stage_counts.items()))
    print(f"stages: {stages}")
    print(f"aborted: {len(run.aborted)}")


def cmd_align(args: argparse.Namespace) -> int:
    config = _run_config(args)
    paths = resolve_paths(config)
    dataset = load_dataset(config, paths)
    index = build_index(config, paths)
    pipeline_config = build_pipeline_config(config)
    selector = TripleSelector(dataset.source, dataset.target)
    sources = _sources(config, dataset.gold)

    if args.dry_run:
        shown = 0
        for source in sources:
            for prompt in preview_prompts(
                source, pipeline_config, dataset.source, dataset.target, index, selector
            ):
                print(f"--- source {source} [{prompt.kind.value}] ---")
                print(prompt.rendered)
                shown += 1
                if shown >= 3:
                    return EXIT_OK
            if shown >= 3:
                break
        return EXIT_OK

    out = _out_dir(config)
    gateway = build_gateway(config, dataset.gold, audit_path=out / "audit.jsonl")

    def progress(done: int, total: int) -> None:
        if done % 50 == 0 or done == total:
            print(f"aligned {done}/{total}", file=sys.stderr)

    try:
        run = align_all(
            sources,
            pipeline_config,
            dataset.source,
            dataset.target,
            index,
            selector,
            gateway,
            progress=progress,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    decisions_path = out / "decisions.jsonl"
    write_decisions(run.decisions, decisions_path)
    print(f"wrote {decisions_path}")
    _print_metrics(run, dataset.gold)
    if not run.decisions and run.aborted:
        return EXIT_GATEWAY
    return EXIT_OK


def _experiment(args: argparse.Namespace, settings: list[tuple[str, dict]], label: str) -> int:
    rows = []
    for name, extra in settings:
        config = _run_config(args, **extra)
        paths = resolve_paths(config)
        dataset = load_dataset(config, paths)
        index = build_index(config, paths)
        pipeline_config = build_pipeline_config(config)
        selector = TripleSelector(dataset.source, dataset.target)
        sources = _sources(config, dataset.gold)
        gateway = build_gateway(config, dataset.gold)
        try:
            run = align_all(
                sources, pipeline_config, dataset.source, dataset.target, index, selector, gateway
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if not run.decisions:
            raise EmptyEvalError(f"setting {name!r} produced no decisions")
        rows.append((name, evaluate(run.decisions, dataset.gold).hits_at_1))
    width = max(len(label), max(len(name) for name, _ in rows))
    print(f"{label:<{width}}  hits@1")
    for name, hits in rows:
        print(f"{name:<{width}}  {hits:.4f}")
    return EXIT_OK


def cmd_exp_order(args: argparse.Namespace) -> int:
    modes = [m.strip() for m in args.orders.split(",") if m.strip()]
    for mode in modes:
        if mode not in ("similarity", "random", "reversed"):
            raise UsageError(f"unknown order mode {mode!r}")
    base = {
        "oracle": args.oracle or "biased",
        "prompt_kinds": args.prompt_kinds or "knowledge",
        "votes": args.votes if args.votes is not None else 1,
    }
    settings = [(mode, {**base, "order": mode}) for mode in modes]
    return _experiment(args, settings, "order")


def cmd_exp_size(args: argparse.Namespace) -> int:
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad --sizes value {args.sizes!r}") from None
    if not sizes or any(s < 1 for s in sizes):
        raise UsageError("--sizes needs positive integers")
    base = {
        "oracle": args.oracle or "biased",
        "prompt_kinds": args.prompt_kinds or "knowledge",
        "fallback": args.fallback or "none",
    }
    settings = [(str(size), {**base, "k_candidates": size}) for size in sizes]
    return _experiment(args, settings, "size")


def cmd_gen_fixture(args: argparse.Namespace) -> int:
    spec = FixtureSpec(
        entities=args.entities,
        attributes=args.attributes,
        relations=args.relations,
        noise=args.noise,
        dim=args.dim,
        seed=args.seed if args.seed is not None else 0,
        recall_k=args.recall_k,
    )
    try:
        manifest = generate_fixture(spec, args.out_dir or "fixture")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    recall = manifest["recall"]
    print(f"fixture written to {args.out_dir or 'fixture'}")
    print(f"entities per side: {spec.entities}")
    print(f"recall@{recall['k']} = {recall['recall']:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgalign",
        description="Entity alignment: candidate retrieval + LLM multiple-choice voting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="parse both KG sides and report statistics")
    _common_flags(p_ingest)
    p_ingest.set_defaults(func=cmd_ingest)

    p_cand = sub.add_parser("candidates", help="write top-k candidate sets and recall")
    _common_flags(p_cand)
    p_cand.set_defaults(func=cmd_candidates)

    p_align = sub.add_parser("align", help="run the full alignment pipeline")
    _common_flags(p_align)
    p_align.add_argument(
        "--dry-run",
        action="store_true",
        help="render the first 3 prompts to stdout without gateway calls",
    )
    p_align.set_defaults(func=cmd_align)

    p_order = sub.add_parser(
        "exp-order", help="candidate order experiment (defaults: biased oracle, 1 vote)"
    )
    _common_flags(p_order)
    p_order.add_argument("--orders", default="similarity,random,reversed")
    p_order.set_defaults(func=cmd_exp_order)

    p_size = sub.add_parser(
        "exp-size", help="candidate set size experiment (defaults: biased oracle, no fallback)"
    )
    _common_flags(p_size)
    p_size.add_argument("--sizes", default="10,20,30,40,50")
    p_size.set_defaults(func=cmd_exp_size)

    p_gen = sub.add_parser("gen-fixture", help="generate a synthetic KG pair with embeddings")
    p_gen.add_argument("--entities", type=int, default=50)
    p_gen.add_argument("--attributes", type=int, default=8)
    p_gen.add_argument("--relations", type=int, default=4)
    p_gen.add_argument("--noise", type=float, default=0.0)
    p_gen.add_argument("--dim", type=int, default=16)
    p_gen.add_argument("--recall-k", dest="recall_k", type=int, default=10)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", dest="out_dir")
    p_gen.set_defaults(func=cmd_gen_fixture)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _GATEWAY_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GATEWAY


if __name__ == "__main__":
    sys.exit(main())
