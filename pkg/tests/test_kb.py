import copy
import itertools

import pytest
import yaml
from hypothesis import given, settings, strategies as st

from score_forge.errors import DanglingReference, DuplicateId, SchemaError, UnknownScenario
from score_forge.kb import (candidate_entities, dump_kb, load_kb, load_kb_path, read_kb_document,
                            slot_matching, validate)

from conftest import FIXTURES


def tiny(**overrides):
    """A minimal valid KB document; keyword arguments replace top-level keys."""
    doc = {
        "locales": ["en"],
        "properties": [{"id": "kind", "type": "enum", "values": ["item"], "domain": "nature", "exclusive": True},
                       {"id": "size", "type": "number", "domain": "nature"}],
        "relations": [{"id": "above", "domain": "space", "holds": "a.tier == b.tier + 1",
                       "base": True, "inverse": "below"},
                      {"id": "below", "domain": "space", "holds": "a.tier + 1 == b.tier", "inverse": "above"}],
        "rules": [],
        "entities": [{"id": f"e{i}", "domain": "nature", "names": {"en": f"thing {i}"},
                      "properties": {"kind": "item", "size": i}} for i in range(3)],
        "scenarios": [{"id": "stack", "domain": "space", "relations": ["above", "below"],
                       "slots": [{"id": f"t{i}", "attrs": {"tier": i}} for i in range(3)]}],
    }
    doc.update(overrides)
    return doc


def test_seed_loads_and_validates(kb):
    assert set(kb.scenarios) == {"booth", "zoo", "week", "family", "shelf"}
    assert {s.domain for s in kb.scenarios.values()} >= {"space", "time", "social", "nature", "mix"}
    assert validate(kb).ok, [str(f) for f in validate(kb).findings]
    assert len(kb.rules) > 100


def test_dump_load_round_trip(kb):
    again = load_kb(dump_kb(kb))
    assert again == kb
    assert dump_kb(again) == dump_kb(kb)


def test_dump_survives_yaml(kb):
    text = yaml.safe_dump(dump_kb(kb), allow_unicode=True, sort_keys=False)
    assert load_kb(yaml.safe_load(text)) == kb


def test_tiny_kb_is_valid():
    kb = load_kb(tiny())
    assert validate(kb).ok
    assert [e.id for e in candidate_entities(kb, "stack")] == ["e0", "e1", "e2"]


def test_fixture_kb_loads():
    kb = load_kb_path(FIXTURES / "strawberry" / "kb.yaml")
    assert validate(kb).ok
    assert list(kb.scenarios) == ["tiers"]


def test_duplicate_id():
    doc = tiny()
    doc["entities"].append(copy.deepcopy(doc["entities"][0]))
    with pytest.raises(DuplicateId):
        load_kb(doc)


@pytest.mark.parametrize("mutate", [
    lambda d: d["relations"][0].update(inverse="nowhere"),
    lambda d: d["entities"][0]["properties"].update(weight=3),
    lambda d: d["scenarios"][0]["relations"].append("beside"),
    lambda d: d["rules"].append({"id": "r", "kind": "composition",
                                 "rule": "rel(beside, X, Y) & rel(beside, Y, Z) => rel(above, X, Z)"}),
    lambda d: d["rules"].append({"id": "r", "kind": "join", "rule": "at(X, S) => at(X, S)",
                                 "scenarios": ["nowhere"]}),
])
def test_dangling_reference(mutate):
    doc = tiny()
    mutate(doc)
    with pytest.raises(DanglingReference):
        load_kb(doc)


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(colours=[]),
    lambda d: d.update(locales=[]),
    lambda d: d["properties"][1].update(type="complex"),
    lambda d: d["relations"][0].update(holds="a.tier ==="),
    lambda d: d["relations"][0].update(domain="cooking"),
    lambda d: d["rules"].append({"id": "r", "kind": "join", "rule": "at(X, S) and at(Y, S)"}),
    lambda d: d["entities"][0].pop("id"),
])
def test_schema_error(mutate):
    doc = tiny()
    mutate(doc)
    with pytest.raises(SchemaError):
        load_kb(doc)


def test_not_a_mapping():
    with pytest.raises(SchemaError):
        load_kb(["locales"])


def test_unknown_scenario():
    kb = load_kb(tiny())
    with pytest.raises(UnknownScenario):
        kb.scenario("zoo")
    with pytest.raises(UnknownScenario):
        candidate_entities(kb, "zoo")


def test_unsatisfiable_scenario_is_reported():
    doc = tiny()
    doc["scenarios"][0]["slots"][0]["constraint"] = "size > 10"
    findings = validate(load_kb(doc))
    assert "unsatisfiable scenario" in findings.codes()


def test_too_few_entities_is_reported():
    doc = tiny(entities=tiny()["entities"][:2])
    assert "unsatisfiable scenario" in validate(load_kb(doc)).codes()


def test_fresh_placeholder_is_reported():
    doc = tiny(rules=[{"id": "r", "kind": "join", "rule": "prop(X, size, V) => rel(above, X, Y)"}])
    assert "fresh placeholder" in validate(load_kb(doc)).codes()


def test_inverse_mismatch_is_reported():
    doc = tiny()
    doc["relations"].append({"id": "over", "domain": "space", "holds": "a.tier > b.tier", "inverse": "below"})
    assert "inverse mismatch" in validate(load_kb(doc)).codes()


def test_kb_directory(tmp_path):
    doc = tiny()
    (tmp_path / "a.yaml").write_text(yaml.safe_dump({k: doc[k] for k in ("locales", "properties", "relations")}))
    (tmp_path / "b.yaml").write_text(yaml.safe_dump({k: doc[k] for k in ("rules", "entities", "scenarios")}))
    assert load_kb_path(tmp_path) == load_kb(doc)
    assert read_kb_document(tmp_path)["locales"] == ["en"]


def test_empty_directory(tmp_path):
    with pytest.raises(SchemaError):
        load_kb_path(tmp_path)


# -- candidates and matchings against brute force -------------------------------------

def test_candidates_brute_force(kb):
    for sc in kb.scenarios.values():
        expected = [e.id for e in kb.entities.values()
                    if (sc.constraint is None or sc.constraint(e.env()))
                    and any(s.constraint is None or s.constraint(e.env()) for s in sc.slots)]
        assert [e.id for e in candidate_entities(kb, sc)] == expected


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=3, max_size=6), st.lists(st.integers(0, 6), min_size=3, max_size=3))
def test_slot_matching_agrees_with_permutations(sizes, limits):
    doc = tiny()
    doc["entities"] = [{"id": f"e{i}", "domain": "nature", "names": {"en": f"x{i}"},
                        "properties": {"kind": "item", "size": s}} for i, s in enumerate(sizes)]
    for slot, limit in zip(doc["scenarios"][0]["slots"], limits):
        slot["constraint"] = f"size >= {limit}"
    kb = load_kb(doc)
    sc = kb.scenario("stack")
    ents = list(kb.entities.values())
    cons = sc.slot_constraints
    brute = any(all(all(c(e.env()) for c in cons[s]) for s, e in zip(sc.slot_ids, perm))
                for perm in itertools.permutations(ents, len(sc.slots)))
    found = slot_matching(sc, ents)
    assert (found is not None) == brute
    if found is not None:
        assert len(set(found.values())) == len(sc.slots)
        for s, eid in found.items():
            assert all(c(kb.entities[eid].env()) for c in cons[s])
