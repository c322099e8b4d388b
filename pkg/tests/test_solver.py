import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from score_forge.errors import NoConsistentAssignment, NotUnique, VocabularyMismatch
from score_forge.generator import ground, instantiate, select_statements
from score_forge.reasoner import close_instance
from score_forge.solver import (AssignmentSpace, answer_set, completions, consistent_assignments,
                                count_consistent, is_one_minimal, is_unique, prune_to_minimal)

from oracles import holds, models, placements

SCENARIOS = ["booth", "zoo", "week", "family", "shelf"]


def grounded(kb, sid, seed):
    return ground(instantiate(kb, sid, np.random.default_rng(seed)))


def sample_forms(p, rng, n=60):
    """Closure facts of the true placement and of one other legal placement."""
    other = p.space.assignment(int(rng.integers(p.space.size)))
    facts = list(p.fact_base) + list(close_instance(p.kb, p.scenario, other, p.entities))
    picks = rng.choice(len(facts), size=min(n, len(facts)), replace=False)
    return [facts[i].form for i in picks]


@pytest.mark.parametrize("sid", SCENARIOS)
def test_enumeration_matches_permutations(kb, sid):
    p = grounded(kb, sid, 0)
    got = {tuple(sorted(p.space.assignment(r).items())) for r in range(p.space.size)}
    want = {tuple(sorted(a.items())) for a in placements(p.scenario, p.entities)}
    assert got == want and len(got) == p.space.size


@pytest.mark.parametrize("sid", SCENARIOS)
def test_vector_masks_match_explicit_checks(kb, sid):
    rng = np.random.default_rng(1)
    p = grounded(kb, sid, 1)
    ents = {e.id: e for e in p.entities}
    rows = rng.choice(p.space.size, size=min(40, p.space.size), replace=False)
    for form in sample_forms(p, rng):
        m = p.space.mask((form, True))
        for r in rows:
            a = p.space.assignment(int(r))
            assert m[r] == holds(kb, p.scenario, a, ents, form), (form, a)
            assert p.space.evaluate((form, True), a) == m[r]


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["booth", "zoo", "shelf"]), st.integers(0, 10**6))
def test_consistent_assignments_match_models(kb, sid, seed):
    rng = np.random.default_rng(seed)
    p = grounded(kb, sid, seed)
    forms = sample_forms(p, rng, n=3)
    truths = [bool(t) for t in rng.integers(0, 2, size=len(forms))]
    stmts = list(zip(forms, truths))
    space = p.space.with_statements(stmts)
    got = sorted(tuple(sorted(a.items())) for a in consistent_assignments(space))
    want = sorted(tuple(sorted(a.items())) for a in models(kb, p.scenario, p.entities, stmts))
    assert got == want


@pytest.mark.parametrize("sid", SCENARIOS)
@pytest.mark.parametrize("seed", range(4))
def test_selected_statements_are_unique_and_minimal(kb, sid, seed):
    p = grounded(kb, sid, seed)
    chosen = select_statements(p, np.random.default_rng(seed))
    keys = [f.key for f in chosen]
    brute = models(kb, p.scenario, p.entities, keys)
    assert brute == [p.assignment]
    for i in range(len(keys)):
        # dropping any one statement lets a second placement through
        assert len(models(kb, p.scenario, p.entities, keys[:i] + keys[i + 1:])) > 1
    assert is_one_minimal(p.space, chosen)
    assert is_unique(p.space.with_statements(chosen))


def test_prune_keeps_uniqueness(kb):
    p = grounded(kb, "shelf", 9)
    chosen = select_statements(p, np.random.default_rng(9), prune=False)
    extra = [f for f in p.fact_base if f.depth == 0][:3]
    space = p.space.with_statements(chosen + extra)
    pruned = prune_to_minimal(space)
    assert count_consistent(space, pruned) == 1
    assert is_one_minimal(space, pruned)
    assert len(pruned) <= len(chosen + extra)


@pytest.mark.parametrize("sid", ["booth", "zoo", "shelf"])
def test_answer_sets_match_brute_force(kb, sid):
    p = grounded(kb, sid, 2)
    chosen = select_statements(p, np.random.default_rng(2))
    space = p.space.with_statements(chosen)
    ents = {e.id: e for e in p.entities}
    for e in p.entities:
        query = ("at", e.id, "?")
        want = {s for s in p.scenario.slot_ids if holds(kb, p.scenario, p.assignment, ents, ("at", e.id, s))}
        assert answer_set(space, query) == want
    for s in p.scenario.slot_ids:
        assert answer_set(space, ("at", "?", s)) == {p.assignment[s]}


def test_vague_answer_set_is_certain_answers(kb):
    p = grounded(kb, "booth", 3)
    a = p.assignment
    slot = p.scenario.slot_ids[0]
    stmts = [(("at", a[slot], slot), True)]
    space = p.space.with_statements(stmts)
    ms = models(kb, p.scenario, p.entities, stmts)
    assert len(ms) > 1
    with pytest.raises(NotUnique):
        answer_set(space, ("at", "?", slot))
    assert answer_set(space, ("at", "?", slot), mode="vague") == {a[slot]}
    other = p.scenario.slot_ids[1]
    certain = {e.id for e in p.entities if all(m[other] == e.id for m in ms)}
    assert answer_set(space, ("at", "?", other), mode="vague") == certain == set()


def test_contradiction_and_vocabulary(kb):
    p = grounded(kb, "zoo", 0)
    f = next(iter(p.fact_base))
    space = p.space.with_statements([(f.form, True), (f.form, False)])
    with pytest.raises(NoConsistentAssignment):
        is_unique(space)
    with pytest.raises(NoConsistentAssignment):
        answer_set(space, ("at", "?", p.scenario.slot_ids[0]))
    with pytest.raises(VocabularyMismatch):
        p.space.mask((("rel", "grandfather_of", p.entity_ids[0], p.entity_ids[1]), True))
    with pytest.raises(VocabularyMismatch):
        p.space.mask((("at", "napoleon", p.scenario.slot_ids[0]), True))
    with pytest.raises(ValueError):
        AssignmentSpace(kb, p.scenario, p.entities[:1])


def test_completions_skip_self_relations(kb):
    p = grounded(kb, "booth", 0)
    rel = p.scenario.relation_vocab[0]
    e = p.entity_ids[0]
    fills = [f for f, _ in completions(p.space, ("rel", rel, e, "?"))]
    assert e not in fills and len(fills) == len(p.entities) - 1
