import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from score_forge.errors import (ConstraintViolation, NotUnique, RetryBudgetExhausted, SinkError,
                                UnsatisfiableScenario)
from score_forge.generator import (QTYPES, GenerationConfig, dumps_record, emit_dataset, generate_question,
                                   generate_records, instantiate, option_rule_ok, question_record,
                                   read_records, replay_answer, verify_record)
from score_forge.kb import load_kb
from score_forge.reasoner import close_instance

from cases import BOOTH_PEOPLE, booth_case, zoo_case

LABEL_KINDS = {"domains", "entities", "properties", "relations", "scenarios", "chain_length", "question_type"}


@pytest.fixture(scope="module")
def corpus(kb):
    return generate_records(kb, GenerationConfig(seed=5), 40, locales=("en", "zh"))


# -- instantiation --------------------------------------------------------------

def test_booth_instances_are_injective_and_legal(kb):
    sc = kb.scenario("booth")
    for seed in range(100):
        p = instantiate(kb, "booth", np.random.default_rng(seed))
        assert set(p.assignment) == set(sc.slot_ids)
        assert len(set(p.assignment.values())) == len(sc.slots)
        assert set(p.assignment.values()) == set(p.entity_ids)
        assert all(kb.entities[e].properties["kind"] == "person" for e in p.entity_ids)


@pytest.mark.parametrize("sid", ["family", "week", "shelf"])
def test_slot_constraints_hold(kb, sid):
    sc = kb.scenario(sid)
    for seed in range(20):
        p = instantiate(kb, sid, np.random.default_rng(seed))
        for slot, eid in p.assignment.items():
            assert all(c(kb.entities[eid].env()) for c in sc.slot_constraints[slot])


def test_unsatisfiable_scenario():
    doc = {
        "locales": ["en"],
        "properties": [{"id": "kind", "type": "enum", "values": ["item"], "domain": "mix"}],
        "relations": [{"id": "above", "domain": "space", "holds": "a.tier > b.tier", "base": True}],
        "rules": [],
        "entities": [{"id": "solo", "domain": "mix", "names": {"en": "solo"}, "properties": {"kind": "item"}}],
        "scenarios": [{"id": "stack", "domain": "space", "relations": ["above"],
                       "slots": [{"id": "t1", "attrs": {"tier": 1}}, {"id": "t2", "attrs": {"tier": 2}}]}],
    }
    with pytest.raises(UnsatisfiableScenario):
        instantiate(load_kb(doc), "stack", np.random.default_rng(0))


# -- micro-cases ---------------------------------------------------------------

def test_zoo_turkey(kb):
    found, answer = zoo_case(kb)
    assert found == [{"no1": "turkey", "no2": "duck", "no3": "carp", "no4": "fox"}]
    assert answer == {"turkey"}


def test_booth_without_anchor_has_certain_answer(kb):
    found, answer = booth_case(kb, anchored=False)
    assert len(found) == 2
    assert answer == {"david"}


def test_booth_with_anchor_is_unique(kb):
    found, answer = booth_case(kb, anchored=True)
    assert len(found) == 1
    assert answer == {"david"}
    fb = close_instance(kb, kb.scenario("booth"), found[0], [kb.entities[e] for e in BOOTH_PEOPLE])
    fact = fb.get(("rel", "diagonal", "john", "david"))
    assert fact is not None and fact.rule is not None


# -- questions -----------------------------------------------------------------

def test_generation_is_deterministic(kb):
    cfg = GenerationConfig(seed=3)
    a = [dumps_record(question_record(generate_question(kb, cfg, i), "en")) for i in range(5)]
    b = [dumps_record(question_record(generate_question(kb, cfg, i), "en")) for i in range(5)]
    assert a == b
    other = [dumps_record(question_record(generate_question(kb, GenerationConfig(seed=4), i), "en"))
             for i in range(5)]
    assert a != other


@pytest.mark.parametrize("qtype", QTYPES)
@pytest.mark.parametrize("sid", ["booth", "zoo", "week", "family", "shelf"])
def test_every_scenario_and_type(kb, sid, qtype):
    q = generate_question(kb, GenerationConfig(seed=1), 0, scenario_id=sid, qtype=qtype)
    rec = question_record(q, "en")
    verify_record(kb, rec)
    assert 2 <= q.chain_length <= 11
    assert rec["labels"]["question_type"] == qtype
    assert q.bucket in ("easy", "medium", "hard")


@pytest.mark.parametrize("qtype", QTYPES)
@pytest.mark.parametrize("hops", [2, 7, 11])
def test_target_hops(kb, qtype, hops):
    cfg = GenerationConfig(seed=2, scenarios=["shelf"], target_hops=hops, qtypes=(qtype,))
    q = generate_question(kb, cfg, 0)
    assert q.chain_length == hops
    verify_record(kb, question_record(q, "en"))


def test_retry_budget(kb):
    cfg = GenerationConfig(seed=2, scenarios=["booth"], hops=(40, 40), retries=2)
    with pytest.raises(RetryBudgetExhausted):
        generate_question(kb, cfg, 0)


def test_corpus_replays(kb, corpus):
    assert len(corpus) == 80
    for rec in corpus:
        verify_record(kb, rec)
        assert replay_answer(kb, rec) == rec["answer"]


def test_option_rule(kb, corpus):
    for rec in corpus:
        assert option_rule_ok(kb, rec)
        keys = [o["key"] for o in rec["options"]]
        assert keys == ["A", "B", "C", "D"]
        if len(kb.scenario(rec["scenario"]).slots) != 4:
            assert rec["options"][3]["text"] in ("None of the above", "以上都不是")


def test_record_shape(corpus):
    rec = corpus[0]
    assert set(rec["labels"]) == LABEL_KINDS
    assert rec["id"] == f"{rec['question_id']}-{rec['locale']}"
    assert rec["chain"]["length"] == len(rec["chain"]["steps"]) == rec["labels"]["chain_length"]
    assert rec["difficulty"]["bucket"] in ("easy", "medium", "hard")
    assert {r["locale"] for r in corpus} == {"en", "zh"}
    # both locales share everything but the text
    en, zh = corpus[0], corpus[1]
    assert en["question_id"] == zh["question_id"] and en["answer"] == zh["answer"]
    assert en["puzzle"] == zh["puzzle"] and en["context_text"] != zh["context_text"]


def test_tampered_records_fail(kb, corpus):
    rec = json.loads(json.dumps(corpus[0]))
    wrong = sorted({"A", "B", "C", "D"} - set(rec["answer"]))[:1]
    rec["answer"] = wrong
    with pytest.raises(ConstraintViolation):
        verify_record(kb, rec)
    rec = json.loads(json.dumps(corpus[0]))
    rec["puzzle"]["statements"] = rec["puzzle"]["statements"][:-1]
    with pytest.raises(NotUnique):
        verify_record(kb, rec)


# -- emission ------------------------------------------------------------------

def test_emission_is_byte_stable(kb, tmp_path):
    cfg = GenerationConfig(seed=8)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    emit_dataset(generate_records(kb, cfg, 6, ("en", "zh")), a)
    emit_dataset(generate_records(kb, cfg, 6, ("en", "zh")), b)
    assert a.read_bytes() == b.read_bytes()
    assert len(read_records(a)) == 12
    # no temp files are left behind
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.jsonl", "b.jsonl"]


def test_emit_questions_and_records_agree(kb, tmp_path):
    cfg = GenerationConfig(seed=8)
    qs = [generate_question(kb, cfg, i) for i in range(3)]
    buf = io.StringIO()
    assert emit_dataset(qs, buf, locales=("en",)) == 3
    assert buf.getvalue() == "".join(dumps_record(r) + "\n" for r in generate_records(kb, cfg, 3))


def test_zero_questions_give_empty_file(kb, tmp_path):
    out = tmp_path / "empty.jsonl"
    assert emit_dataset(generate_records(kb, GenerationConfig(), 0), out) == 0
    assert out.exists() and out.read_bytes() == b""


def test_unwritable_sink(tmp_path):
    with pytest.raises(SinkError):
        emit_dataset([], tmp_path / "missing" / "out.jsonl")


def test_parallel_matches_serial(kb):
    cfg = GenerationConfig(seed=13)
    assert generate_records(kb, cfg, 6, workers=2) == generate_records(kb, cfg, 6, workers=1)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**4))
def test_any_seed_replays(kb, seed, index):
    q = generate_question(kb, GenerationConfig(seed=seed), index)
    verify_record(kb, question_record(q, "en"))
