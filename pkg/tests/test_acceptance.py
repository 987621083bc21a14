"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Two tests are gated on external resources and skip when absent:
full-dataset ingestion (set ``KGALIGN_DBP15K_DIR``) and the live endpoint
smoke test (set ``KGALIGN_SMOKE_ENDPOINT``, ``KGALIGN_ALLOW_REMOTE=1``).
"""

from __future__ import annotations

import itertools
import os
import random
import time
from collections import Counter
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import chisquare

from kgalign.cli import main
from kgalign.fixtures import FixtureSpec, generate_fixture
from kgalign.gateway import FirstOptionOracle, HttpGateway, GatewayConfig, PositionBiasedOracle, TruthfulOracle
from kgalign.kg import load_graph, parse_gold
from kgalign.pipeline import PipelineConfig, align_all, evaluate
from kgalign.prompts import PromptKind, build_prompt
from kgalign.retrieval import CandidateSet, EmbeddingIndex, EmbeddingMatrix, ScoreTable, load_embeddings, top_k
from kgalign.selection import TripleSelector
from kgalign.voting import VoteConfig, run_vote, tally

from conftest import entity_uris, make_graph
from test_retrieval import brute_force_top_k
from test_selection import (
    oracle_freq_att,
    oracle_freq_rel,
    oracle_fun_att,
    oracle_fun_rel,
    oracle_identy_att,
    oracle_identy_rel,
)
from test_voting import brute_force_tally


@contextmanager
def criterion(number: int, name: str):
    try:
        yield
    except BaseException as exc:
        status = "SKIP" if exc.__class__.__name__ == "Skipped" else "FAIL"
        print(f"[acceptance {number}] {name}: {status}")
        raise
    print(f"[acceptance {number}] {name}: PASS")


@pytest.fixture(scope="module")
def fixture_100(tmp_path_factory):
    path = tmp_path_factory.mktemp("accept_fixture_100")
    manifest = generate_fixture(FixtureSpec(entities=100, noise=0.0, seed=20), path)
    assert manifest["recall"]["recall"] == 1.0
    return path


def load_fixture(path: Path):
    source, _ = load_graph(
        path / "ent_ids_1", path / "triples_1", path / "att_triples_1",
        relation_names_path=path / "rel_ids_1",
    )
    target, _ = load_graph(
        path / "ent_ids_2", path / "triples_2", path / "att_triples_2",
        relation_names_path=path / "rel_ids_2",
    )
    gold = parse_gold(path / "ref_ent_ids")
    index = EmbeddingIndex(
        load_embeddings(path / "emb_1.txt"), load_embeddings(path / "emb_2.txt")
    )
    return source, target, gold, index


# -- 1: ingestion fidelity on the real dataset ---------------------------------


# (entities, relations, attributes, rel triples, att triples) per dataset side
EXPECTED_COUNTS = {
    ("zh_en", "1"): (66469, 2830, 8113, 153929, 379684),
    ("zh_en", "2"): (98125, 2317, 7173, 237674, 567755),
    ("ja_en", "1"): (65744, 2043, 5882, 164373, 354619),
    ("ja_en", "2"): (95680, 2096, 6066, 233319, 497230),
    ("fr_en", "1"): (66858, 1379, 4547, 192191, 528665),
    ("fr_en", "2"): (105889, 2209, 6422, 278590, 576543),
}


def _att_file(pair_dir: Path, suffix: str) -> Path:
    named = pair_dir / f"att_triples_{suffix}"
    return named if named.is_file() else pair_dir / f"training_attrs_{suffix}"


def test_acceptance_1_ingestion_fidelity():
    with criterion(1, "ingestion fidelity (full dataset)"):
        root = os.environ.get("KGALIGN_DBP15K_DIR")
        if not root:
            pytest.skip("KGALIGN_DBP15K_DIR not set")
        pairs = [p for p in ("zh_en", "ja_en", "fr_en") if (Path(root) / p).is_dir()]
        if not pairs:
            pytest.skip(f"no dataset pair directories under {root}")
        started = time.monotonic()
        for pair in pairs:
            pair_dir = Path(root) / pair
            for suffix in ("1", "2"):
                graph, _ = load_graph(
                    pair_dir / f"ent_ids_{suffix}",
                    pair_dir / f"triples_{suffix}",
                    _att_file(pair_dir, suffix),
                )
                assert tuple(graph.stats()) == EXPECTED_COUNTS[(pair, suffix)], (pair, suffix)
        assert time.monotonic() - started < 60.0


# -- 2: heuristic oracle equivalence -----------------------------------------------


def _random_kg_pair(seed: int):
    rng = random.Random(seed)
    att_vocab = [f"http://x/p/a{i}" for i in range(6)]
    rel_vocab = [f"http://x/r/r{i}" for i in range(4)]

    def side(base):
        n = rng.randint(2, 50)
        att = [
            (rng.randrange(n), rng.choice(att_vocab), f"v{rng.randint(0, 9)}")
            for _ in range(rng.randint(0, 2 * n))
        ]
        rel = [
            (rng.randrange(n), rng.choice(rel_vocab), rng.randrange(n))
            for _ in range(rng.randint(0, 2 * n))
        ]
        return make_graph(entity_uris(n, base=base), att=att, rel=rel), n

    source, _ = side("http://a.x/E")
    target, n_target = side("http://b.x/E")
    candidates = rng.sample(range(n_target), rng.randint(1, n_target))
    return source, target, candidates, att_vocab, rel_vocab


def test_acceptance_2_heuristic_oracle_equivalence():
    with criterion(2, "heuristic oracle equivalence (200 synthetic KGs)"):
        started = time.monotonic()
        for seed in range(200):
            source, target, cands, att_vocab, rel_vocab = _random_kg_pair(seed)
            selector = TripleSelector(source, target)
            att_present = set(source.attributes.values()) | set(target.attributes.values())
            rel_present = set(source.relations.values()) | set(target.relations.values())
            for uri in att_vocab:
                if uri in att_present:
                    assert selector.function_degree_att(uri) == oracle_fun_att(uri, source, target)
                    assert selector.frequency_att(uri, cands) == oracle_freq_att(uri, cands, target)
                assert selector.identifiability_att(uri, cands) == oracle_identy_att(
                    uri, cands, source, target
                )
            for uri in rel_vocab:
                if uri in rel_present:
                    assert selector.function_degree_rel(uri) == oracle_fun_rel(uri, source, target)
                    assert selector.frequency_rel(uri, cands) == oracle_freq_rel(uri, cands, target)
                assert selector.identifiability_rel(uri, cands) == oracle_identy_rel(
                    uri, cands, source, target
                )
        assert time.monotonic() - started < 10.0


# -- 3: retrieval oracle equivalence --------------------------------------------------


def test_acceptance_3_retrieval_oracle_equivalence():
    with criterion(3, "retrieval matches brute-force full sort"):
        started = time.monotonic()
        rng = np.random.default_rng(123)
        source_matrix = EmbeddingMatrix.from_vectors(
            {i: rng.normal(size=32) for i in range(200)}
        )
        target_matrix = EmbeddingMatrix.from_vectors(
            {1000 + i: rng.normal(size=32) for i in range(200)}
        )
        for src in range(200):
            for k in (1, 5, 10):
                got = top_k(src, k, source_matrix, target_matrix)
                assert list(got.candidates) == brute_force_top_k(src, k, source_matrix, target_matrix)
        assert time.monotonic() - started < 5.0


# -- 4: voting verbatim semantics ------------------------------------------------------


def test_acceptance_4_voting_verbatim_semantics():
    with criterion(4, "tally reproduces threshold rule exhaustively"):
        for n in range(1, 6):
            threshold = n // 2
            for m in range(1, 5):
                for size in range(0, n + 1):
                    for combo in itertools.combinations_with_replacement(range(m), size):
                        assert tally(list(combo), n=n) == brute_force_tally(
                            combo, n, threshold
                        ), (n, m, combo)


# -- 5: label-tracking soundness ---------------------------------------------------------


def test_acceptance_5_label_tracking_end_to_end(fixture_100):
    with criterion(5, "truthful oracle end-to-end hits@1 = 1.0 across 10 seeds"):
        source, target, gold, index = load_fixture(fixture_100)
        selector = TripleSelector(source, target)
        sources = sorted(gold)
        for seed in range(10):
            config = PipelineConfig(
                k_candidates=10, vote=VoteConfig(n=5, seed=seed), concurrency=8
            )
            run = align_all(
                sources, config, source, target, index, selector, TruthfulOracle(gold)
            )
            assert run.aborted == []
            report = evaluate(run.decisions, gold)
            assert report.hits_at_1 == 1.0, f"seed {seed}"


# -- 6: bias mitigation ---------------------------------------------------------------------


def test_acceptance_6_bias_mitigation():
    with criterion(6, "positional bias yields no systematic winner (chi-square)"):
        m, n, trials = 10, 5, 1000
        source = make_graph({0: "http://a.x/S0"})
        target = make_graph({100 + i: f"http://b.x/T{i}" for i in range(m)})
        candidates = CandidateSet(0, tuple((100 + i, 1.0 - 0.01 * i) for i in range(m)))
        builder = lambda ordered: build_prompt(PromptKind.KNOWLEDGE, 0, ordered, source, target)
        oracle = FirstOptionOracle()
        winners = []
        for seed in range(trials):
            config = VoteConfig(n=n, seed=seed, identity_first=False)
            outcome = run_vote(0, candidates, PromptKind.KNOWLEDGE, config, oracle, builder)
            if outcome.winner is not None:
                winners.append(outcome.winner)
        assert winners, "no winners at all; cannot test uniformity"
        counts = Counter(winners)
        observed = [counts.get(100 + i, 0) for i in range(m)]
        result = chisquare(observed)
        assert result.pvalue > 0.01, f"winner distribution not uniform: {observed}"
        # systematic winner: a candidate winning far beyond its uniform share
        expected_share = len(winners) / m
        systematic = [c for c, v in counts.items() if v > 3 * expected_share]
        assert systematic == [], f"systematic winners {systematic} in {observed}"


# -- 7: candidate-size trend -------------------------------------------------------------------


@pytest.fixture(scope="module")
def fixture_300(tmp_path_factory):
    path = tmp_path_factory.mktemp("accept_fixture_300")
    generate_fixture(FixtureSpec(entities=300, noise=0.0, seed=21, recall_k=10), path)
    return path


def test_acceptance_7_candidate_size_trend(fixture_300):
    with criterion(7, "hits@1 non-increasing across candidate sizes 10/20/30"):
        source, target, gold, index = load_fixture(fixture_300)
        selector = TripleSelector(source, target)
        sources = sorted(gold)
        oracle = PositionBiasedOracle(bias=(4.0, 2.0, 1.0), seed=77)
        hits = {}
        for size in (10, 20, 30):
            config = PipelineConfig(
                k_candidates=size,
                vote=VoteConfig(n=5, seed=77),
                prompt_kinds=(PromptKind.KNOWLEDGE,),
                fallback="none",
                concurrency=8,
            )
            run = align_all(sources, config, source, target, index, selector, oracle)
            hits[size] = evaluate(run.decisions, gold).hits_at_1
        assert hits[10] + 0.02 >= hits[20], hits
        assert hits[20] + 0.02 >= hits[30], hits
        assert hits[10] > hits[30], hits  # the trend is real, not flat noise


# -- 8: reproducibility -------------------------------------------------------------------------


def test_acceptance_8_reproducible_decisions(fixture_100, tmp_path):
    with criterion(8, "align runs are byte-identical under fixed seeds"):
        blobs = []
        for name in ("run1", "run2"):
            out = tmp_path / name
            code = main(
                [
                    "align", "--data-dir", str(fixture_100), "--out", str(out),
                    "--oracle", "biased", "--seed", "13", "--votes", "5",
                ]
            )
            assert code == 0
            blobs.append((out / "decisions.jsonl").read_bytes())
        assert blobs[0] == blobs[1]


# -- 9: live endpoint smoke (optional) ----------------------------------------------------------


def test_acceptance_9_live_smoke():
    with criterion(9, "live endpoint smoke (50 sampled pairs)"):
        endpoint = os.environ.get("KGALIGN_SMOKE_ENDPOINT")
        if not endpoint:
            pytest.skip("KGALIGN_SMOKE_ENDPOINT not set")
        if os.environ.get("KGALIGN_ALLOW_REMOTE") != "1":
            pytest.skip("KGALIGN_ALLOW_REMOTE != 1")
        root = os.environ.get("KGALIGN_DBP15K_DIR")
        if not root or not (Path(root) / "zh_en").is_dir():
            pytest.skip("KGALIGN_DBP15K_DIR with zh_en not available")

        zh_en = Path(root) / "zh_en"
        att1 = zh_en / "att_triples_1"
        if not att1.is_file():
            att1 = zh_en / "training_attrs_1"
        att2 = zh_en / "att_triples_2"
        if not att2.is_file():
            att2 = zh_en / "training_attrs_2"
        source, _ = load_graph(zh_en / "ent_ids_1", zh_en / "triples_1", att1)
        target, _ = load_graph(zh_en / "ent_ids_2", zh_en / "triples_2", att2)
        gold = parse_gold(zh_en / "ref_ent_ids")

        rng = random.Random(99)
        sampled = rng.sample(sorted(gold), 50)
        target_pool = sorted(target.entities)
        rows = {}
        for src in sampled:
            others = rng.sample(target_pool, 12)
            ids = [gold[src]] + [t for t in others if t != gold[src]][:9]
            rng.shuffle(ids)
            rows[src] = {tid: 1.0 - 0.01 * rank for rank, tid in enumerate(ids)}
        index = ScoreTable(rows)

        gateway = HttpGateway(
            GatewayConfig(
                endpoint=endpoint,
                model=os.environ.get("KGALIGN_SMOKE_MODEL", "default"),
                api_key=os.environ.get("KGALIGN_API_KEY"),
                retries=3,
            )
        )
        selector = TripleSelector(source, target)
        config = PipelineConfig(
            k_candidates=10,
            vote=VoteConfig(n=3, seed=99),
            prompt_kinds=(PromptKind.KNOWLEDGE,),
            concurrency=4,
        )
        run = align_all(sampled, config, source, target, index, selector, gateway)
        total = parsed = 0
        for decision in run.decisions:
            for outcome in decision.vote_outcomes.values():
                for round_ in outcome.rounds:
                    if round_.choice is None:
                        continue
                    total += 1
                    if round_.choice.chosen:
                        parsed += 1
        assert total > 0
        assert parsed / total >= 0.90, f"parsed {parsed}/{total} rounds"
