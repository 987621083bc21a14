from __future__ import annotations

import random
from fractions import Fraction

import pytest

from kgalign.errors import (
    AttributeUnknownError,
    EmptyCandidatesError,
    RelationUnknownError,
)
from kgalign.kg import KnowledgeGraph
from kgalign.selection import TripleKind, TripleSelector

from conftest import entity_uris, make_graph


# -- brute-force oracle ---------------------------------------------------------
#
# Materializes the union of both graphs' triple sets literally, tagging
# entity ids by side (the two id spaces are disjoint universes even when
# the integers collide), and evaluates each quantity as a set comprehension.
# No caching, no shared code with the implementation's counting.


def _att_union(source: KnowledgeGraph, target: KnowledgeGraph):
    union = set()
    for side, kg in (("s", source), ("t", target)):
        for t in kg.att_triples:
            union.add(((side, t.head), kg.attributes[t.attribute], t.value))
    return union


def _rel_union(source: KnowledgeGraph, target: KnowledgeGraph):
    union = set()
    for side, kg in (("s", source), ("t", target)):
        for t in kg.rel_triples:
            union.add(((side, t.head), kg.relations[t.relation], (side, t.tail)))
    return union


def oracle_fun_att(uri, source, target):
    union = _att_union(source, target)
    heads = {h for (h, a, v) in union if a == uri}
    pairs = {(h, v) for (h, a, v) in union if a == uri}
    return Fraction(len(heads), len(pairs))


def oracle_freq_att(uri, candidates, target):
    possessing = {
        h
        for h in candidates
        if any(
            t.head == h and target.attributes[t.attribute] == uri
            for t in target.att_triples
        )
    }
    return Fraction(len(possessing), len(candidates))


def oracle_identy_att(uri, candidates, source, target):
    union = _att_union(source, target)
    if not any(a == uri for (_, a, _) in union):
        return Fraction(0)
    return oracle_fun_att(uri, source, target) * oracle_freq_att(uri, candidates, target)


def oracle_fun_rel(uri, source, target):
    union = _rel_union(source, target)
    heads = {h for (h, r, t) in union if r == uri}
    pairs = {(h, t) for (h, r, t) in union if r == uri}
    return Fraction(len(heads), len(pairs))


def oracle_freq_rel(uri, candidates, target):
    possessing = {
        h
        for h in candidates
        if any(
            t.head == h and target.relations[t.relation] == uri
            for t in target.rel_triples
        )
    }
    return Fraction(len(possessing), len(candidates))


def oracle_identy_rel(uri, candidates, source, target):
    union = _rel_union(source, target)
    if not any(r == uri for (_, r, _) in union):
        return Fraction(0)
    return oracle_fun_rel(uri, source, target) * oracle_freq_rel(uri, candidates, target)


# -- worked examples -------------------------------------------------------------

A = "http://x/p/a"
STATE = "http://x/p/state"
AREA = "http://x/p/area"
MOTTO = "http://x/p/motto"
R = "http://x/r/near"


def test_function_degree_att_two_thirds():
    # heads {e1, e2}; pairs {(e1,10), (e2,20), (e2,21)} -> 2/3
    source = make_graph(
        entity_uris(3),
        att=[(1, A, "10"), (2, A, "20"), (2, A, "21")],
    )
    target = make_graph(entity_uris(0, base="http://b.example.org/resource/E"))
    selector = TripleSelector(source, target)
    assert selector.function_degree_att(A) == Fraction(2, 3)


def test_function_degree_att_functional_is_one():
    source = make_graph(entity_uris(3), att=[(0, A, "x"), (1, A, "y"), (2, A, "z")])
    target = make_graph({})
    assert TripleSelector(source, target).function_degree_att(A) == 1


def test_function_degree_att_absent_raises():
    selector = TripleSelector(make_graph(entity_uris(1)), make_graph({}))
    with pytest.raises(AttributeUnknownError):
        selector.function_degree_att("http://x/p/never")


def target_with_attr_holders(n_candidates: int, holders: dict[str, list[int]]) -> KnowledgeGraph:
    att = [
        (c, uri, f"v{c}")
        for uri, cands in holders.items()
        for c in cands
    ]
    return make_graph(entity_uris(n_candidates, base="http://b.example.org/resource/C"), att=att)


def test_frequency_att_half():
    target = target_with_attr_holders(4, {A: [0, 2]})
    selector = TripleSelector(make_graph({}), target)
    assert selector.frequency_att(A, [0, 1, 2, 3]) == Fraction(1, 2)


def test_frequency_att_all_and_none():
    target = target_with_attr_holders(4, {A: [0, 1, 2, 3]})
    selector = TripleSelector(make_graph({}), target)
    assert selector.frequency_att(A, [0, 1, 2, 3]) == 1
    assert selector.frequency_att("http://x/p/other", [0, 1, 2, 3]) == 0


def test_frequency_att_empty_candidates():
    selector = TripleSelector(make_graph({}), make_graph({}))
    with pytest.raises(EmptyCandidatesError):
        selector.frequency_att(A, [])


def test_identifiability_att_product():
    # fun = 2/3 from source side, freq = 1/2 over four candidates
    source = make_graph(
        entity_uris(3),
        att=[(1, A, "10"), (2, A, "20"), (2, A, "21")],
    )
    target = target_with_attr_holders(4, {A: [0, 2]})
    selector = TripleSelector(source, target)
    # fun over union: source heads {e1,e2} + target heads {c0,c2} = 4 heads;
    # pairs: 3 source + 2 target = 5 -> fun 4/5; freq 1/2 -> identy 2/5
    assert selector.identifiability_att(A, [0, 1, 2, 3]) == Fraction(2, 5)
    assert selector.identifiability_att(A, [0, 1, 2, 3]) == oracle_identy_att(
        A, [0, 1, 2, 3], source, target
    )


def test_identifiability_att_zero_frequency_absorbs():
    source = make_graph(entity_uris(2), att=[(0, A, "x"), (1, A, "y")])
    target = target_with_attr_holders(2, {})
    assert TripleSelector(source, target).identifiability_att(A, [0, 1]) == 0


def test_identifiability_att_perfect():
    target = target_with_attr_holders(2, {A: [0, 1]})
    assert TripleSelector(make_graph({}), target).identifiability_att(A, [0, 1]) == 1


def test_identifiability_att_absent_subject_is_zero():
    selector = TripleSelector(make_graph(entity_uris(1)), target_with_attr_holders(1, {}))
    assert selector.identifiability_att("http://x/p/never", [0]) == 0


def test_function_degree_rel_two_thirds():
    # heads {e1, e2}; pairs {(e1,t1), (e1,t2), (e2,t1)} -> 2/3
    source = make_graph(
        entity_uris(5),
        rel=[(1, R, 3), (1, R, 4), (2, R, 3)],
    )
    selector = TripleSelector(source, make_graph({}))
    assert selector.function_degree_rel(R) == Fraction(2, 3)


def test_function_degree_rel_one_to_one():
    source = make_graph(entity_uris(4), rel=[(0, R, 1), (2, R, 3)])
    assert TripleSelector(source, make_graph({})).function_degree_rel(R) == 1


def test_function_degree_rel_absent_raises():
    selector = TripleSelector(make_graph(entity_uris(1)), make_graph({}))
    with pytest.raises(RelationUnknownError):
        selector.function_degree_rel("http://x/r/never")


def test_identifiability_rel_absent_from_candidates_is_zero():
    source = make_graph(entity_uris(2), rel=[(0, R, 1)])
    target = make_graph(entity_uris(3, base="http://b.example.org/resource/C"))
    assert TripleSelector(source, target).identifiability_rel(R, [0, 1, 2]) == 0


# -- selection ---------------------------------------------------------------------


def build_selection_pair():
    # source entity 0 carries state, area, motto; candidate possession rates
    # 3/4, 2/4, 1/4 give strictly ordered identifiability (fun = 1 for all).
    source = make_graph(
        entity_uris(1),
        att=[(0, STATE, "NSW"), (0, AREA, "76.8"), (0, MOTTO, "m")],
    )
    target = target_with_attr_holders(
        4, {STATE: [0, 1, 2], AREA: [0, 1], MOTTO: [0]}
    )
    return source, target


def test_select_top_triples_picks_highest_identifiability():
    source, target = build_selection_pair()
    selector = TripleSelector(source, target)
    selected = selector.select_top_triples(0, [0, 1, 2, 3], TripleKind.ATTRIBUTE, k=2)
    uris = [source.attributes[t.attribute] for t, _ in selected.triples]
    assert uris == [STATE, AREA]


def test_select_top_triples_empty_when_no_triples():
    source = make_graph(entity_uris(1))
    target = target_with_attr_holders(2, {A: [0]})
    selector = TripleSelector(source, target)
    selected = selector.select_top_triples(0, [0, 1], TripleKind.ATTRIBUTE, k=3)
    assert selected.triples == ()


def test_select_top_triples_tie_lower_attribute_id_wins():
    b_uri = "http://x/p/b"
    source = make_graph(entity_uris(1), att=[(0, A, "x"), (0, b_uri, "y")])
    target = target_with_attr_holders(2, {A: [0], b_uri: [1]})
    selector = TripleSelector(source, target)
    selected = selector.select_top_triples(0, [0, 1], TripleKind.ATTRIBUTE, k=1)
    assert len(selected.triples) == 1
    triple, _ = selected.triples[0]
    assert source.attributes[triple.attribute] == A  # interned first, lower id


def test_select_top_triples_keeps_all_triples_of_selected_subject():
    source = make_graph(
        entity_uris(1),
        att=[(0, A, "x1"), (0, A, "x2"), (0, MOTTO, "m")],
    )
    target = target_with_attr_holders(2, {A: [0, 1], MOTTO: [0]})
    selector = TripleSelector(source, target)
    selected = selector.select_top_triples(0, [0, 1], TripleKind.ATTRIBUTE, k=1)
    values = [t.value for t, _ in selected.triples]
    assert values == ["x1", "x2"]  # both triples of A, file order, count as one subject


def test_select_top_triples_relation_kind_uses_outgoing():
    source = make_graph(entity_uris(3), rel=[(0, R, 1), (2, R, 0)])
    target = make_graph(
        entity_uris(2, base="http://b.example.org/resource/C"),
        rel=[(0, R, 1)],
    )
    selector = TripleSelector(source, target)
    selected = selector.select_top_triples(0, [0, 1], TripleKind.RELATION, k=5)
    assert [t.head for t, _ in selected.triples] == [0]  # incoming (2, R, 0) excluded


def test_select_top_triples_for_target_side_entity():
    source, target = build_selection_pair()
    selector = TripleSelector(source, target)
    selected = selector.select_top_triples(
        0, [0, 1, 2, 3], TripleKind.ATTRIBUTE, k=2, side="target"
    )
    uris = [target.attributes[t.attribute] for t, _ in selected.triples]
    assert uris == [STATE, AREA]


# -- randomized oracle equivalence ---------------------------------------------------


def random_kg_pair(seed: int):
    rng = random.Random(seed)
    att_vocab = [f"http://x/p/a{i}" for i in range(6)]
    rel_vocab = [f"http://x/r/r{i}" for i in range(4)]

    def one_side(base: str):
        n = rng.randint(2, 20)
        att = [
            (rng.randrange(n), rng.choice(att_vocab), f"v{rng.randint(0, 6)}")
            for _ in range(rng.randint(0, 40))
        ]
        rel = [
            (rng.randrange(n), rng.choice(rel_vocab), rng.randrange(n))
            for _ in range(rng.randint(0, 40))
        ]
        return make_graph(entity_uris(n, base=base), att=att, rel=rel), n

    source, _ = one_side("http://a.example.org/resource/E")
    target, n_target = one_side("http://b.example.org/resource/E")
    k = rng.randint(1, n_target)
    candidates = rng.sample(range(n_target), k)
    return source, target, candidates, att_vocab, rel_vocab


@pytest.mark.parametrize("seed", range(30))
def test_all_six_quantities_match_brute_force(seed):
    source, target, candidates, att_vocab, rel_vocab = random_kg_pair(seed)
    selector = TripleSelector(source, target)
    present_att = set(source.attributes.values()) | set(target.attributes.values())
    present_rel = set(source.relations.values()) | set(target.relations.values())
    for uri in att_vocab:
        if uri in present_att:
            assert selector.function_degree_att(uri) == oracle_fun_att(uri, source, target)
            assert selector.frequency_att(uri, candidates) == oracle_freq_att(
                uri, candidates, target
            )
        assert selector.identifiability_att(uri, candidates) == oracle_identy_att(
            uri, candidates, source, target
        )
    for uri in rel_vocab:
        if uri in present_rel:
            assert selector.function_degree_rel(uri) == oracle_fun_rel(uri, source, target)
            assert selector.frequency_rel(uri, candidates) == oracle_freq_rel(
                uri, candidates, target
            )
        assert selector.identifiability_rel(uri, candidates) == oracle_identy_rel(
            uri, candidates, source, target
        )


@pytest.mark.parametrize("seed", range(10))
def test_score_ranges(seed):
    source, target, candidates, att_vocab, rel_vocab = random_kg_pair(seed)
    selector = TripleSelector(source, target)
    for uri in set(source.attributes.values()) | set(target.attributes.values()):
        fun = selector.function_degree_att(uri)
        assert 0 < fun <= 1
        freq = selector.frequency_att(uri, candidates)
        assert 0 <= freq <= 1
        assert 0 <= selector.identifiability_att(uri, candidates) <= 1
    for uri in set(source.relations.values()) | set(target.relations.values()):
        assert 0 < selector.function_degree_rel(uri) <= 1


def test_frequency_monotone_under_possessing_swap():
    # Swapping a non-possessing candidate for a possessing one, |C_e| fixed,
    # never lowers frequency.
    target = target_with_attr_holders(6, {A: [0, 1, 2]})
    selector = TripleSelector(make_graph({}), target)
    before = selector.frequency_att(A, [0, 3, 4])
    after = selector.frequency_att(A, [0, 3, 1])  # 4 (non-holder) -> 1 (holder)
    assert after >= before


def test_dump_scores_tsv(tmp_path):
    source, target = build_selection_pair()
    selector = TripleSelector(source, target)
    path = tmp_path / "scores.tsv"
    selector.dump_scores(path, [("source", 0, [0, 1, 2, 3])])
    rows = [line.split("\t") for line in path.read_text(encoding="utf-8").splitlines()]
    assert all(len(row) == 6 for row in rows)
    by_uri = {row[2]: row for row in rows if row[1] == "attribute"}
    assert float(by_uri[STATE][5]) == pytest.approx(0.75)  # fun 1 x freq 3/4
    assert float(by_uri[MOTTO][5]) == pytest.approx(0.25)


def test_selection_stable_under_triple_permutation():
    rng = random.Random(42)
    att = [
        (0, f"http://x/p/a{i % 4}", f"v{i}")
        for i in range(12)
    ]
    target = target_with_attr_holders(3, {f"http://x/p/a{i}": [0, 1][: i % 3] for i in range(4)})
    base = make_graph(entity_uris(1), att=att)
    shuffled_att = att[:]
    rng.shuffle(shuffled_att)
    shuffled = make_graph(entity_uris(1), att=shuffled_att)
    sel_a = TripleSelector(base, target).select_top_triples(0, [0, 1, 2], TripleKind.ATTRIBUTE, k=2)
    sel_b = TripleSelector(shuffled, target).select_top_triples(0, [0, 1, 2], TripleKind.ATTRIBUTE, k=2)
    uris_a = [base.attributes[t.attribute] for t, _ in sel_a.triples]
    uris_b = [shuffled.attributes[t.attribute] for t, _ in sel_b.triples]
    assert uris_a == uris_b
    assert sorted((base.attributes[t.attribute], t.value) for t, _ in sel_a.triples) == sorted(
        (shuffled.attributes[t.attribute], t.value) for t, _ in sel_b.triples
    )
