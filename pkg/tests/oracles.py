"""Deliberately naive reference implementations used as test oracles.

Nothing here shares code with the engine beyond the KB data model and the
rule pattern matcher: closure is a full rescan until nothing changes, and
truth of a statement is checked by plain loops over explicit placements.
"""

from __future__ import annotations

import itertools
from collections import deque

from score_forge.logic import fmt_value, instantiate, match, split_descriptor, term_kind


def naive_closure(kb, scenario, base_keys):
    """Every (form, truth) reachable from ``base_keys`` under the scenario's rules.

    Each pass rescans the whole fact set for every premise of every rule.
    """
    rules = kb.rules_for(scenario.id)
    facts = set(base_keys)
    while True:
        snapshot = list(facts)
        new = set()
        for rule in rules:
            envs = [{}]
            for pat in rule.premises:
                envs = [e2 for env in envs for form, truth in snapshot
                        if (e2 := match(pat, form, truth, env)) is not None]
            for env in envs:
                if rule.guard is not None and not rule.guard(env):
                    continue
                key = (instantiate(rule.conclusion, env), rule.conclusion.truth)
                if key not in facts:
                    new.add(key)
        if not new:
            return facts
        facts |= new


def naive_levels(kb, scenario, base_keys):
    """Map each reachable (form, truth) to the pass in which it first appears.

    Pass 0 is the base; pass n holds what follows from passes below n, so the
    number is the height of the shortest derivation tree.
    """
    level = {k: 0 for k in base_keys}
    rules = kb.rules_for(scenario.id)
    n = 0
    while True:
        n += 1
        snapshot = list(level)
        new = set()
        for rule in rules:
            envs = [{}]
            for pat in rule.premises:
                envs = [e2 for env in envs for form, truth in snapshot
                        if (e2 := match(pat, form, truth, env)) is not None]
            for env in envs:
                if rule.guard is None or rule.guard(env):
                    key = (instantiate(rule.conclusion, env), rule.conclusion.truth)
                    if key not in level:
                        new.add(key)
        if not new:
            return level
        for k in new:
            level[k] = n


def slot_envs(scenario, placement, entities):
    out = {}
    for slot in scenario.slots:
        ent = entities[placement[slot.id]]
        env = dict(ent.properties)
        env.update(slot.attrs)
        env["slot"] = slot.id
        env["id"] = ent.id
        out[slot.id] = env
    return out


def _slots_of(term, placement, entities):
    kind = term_kind(term)
    if kind == "occupant":
        return [term[1:]]
    if kind == "entity":
        return [s for s, e in placement.items() if e == term]
    prop, raw = split_descriptor(term)
    return [s for s, e in placement.items()
            if prop in entities[e].properties and fmt_value(entities[e].properties[prop]) == raw]


def _region_slots(scenario, region_id):
    region = next(r for r in scenario.regions if r.id == region_id)
    return {s.id for s in scenario.slots if region.where(dict(s.attrs, slot=s.id))}


def holds(kb, scenario, placement, entities, form):
    """Truth of one form in one explicit placement."""
    pred = form[0]
    if pred == "at":
        return form[2] in _slots_of(form[1], placement, entities)
    if pred == "in":
        return bool(set(_slots_of(form[1], placement, entities)) & _region_slots(scenario, form[2]))
    if pred == "prop":
        _, term, prop, value = form
        return any(fmt_value(entities[placement[s]].properties.get(prop, object())) == fmt_value(value)
                   for s in _slots_of(term, placement, entities))
    _, rid, a, b = form
    envs = slot_envs(scenario, placement, entities)
    rel = kb.relations[rid]
    return any(s1 != s2 and rel.holds({"a": envs[s1], "b": envs[s2]})
               for s1 in _slots_of(a, placement, entities) for s2 in _slots_of(b, placement, entities))


def placements(scenario, entity_list):
    """All injective placements that meet the slot constraints."""
    ids = [e.id for e in entity_list]
    by_id = {e.id: e for e in entity_list}
    cons = scenario.slot_constraints
    for perm in itertools.permutations(ids, len(scenario.slots)):
        p = dict(zip(scenario.slot_ids, perm))
        ok = True
        for slot, eid in p.items():
            for c in cons[slot]:
                if not c(by_id[eid].env()):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            yield p


def models(kb, scenario, entity_list, statements):
    """Placements in which every (form, truth) statement holds."""
    by_id = {e.id: e for e in entity_list}
    return [p for p in placements(scenario, entity_list)
            if all(holds(kb, scenario, p, by_id, f) == t for f, t in statements)]


def kinship_distance(edges, start, goal):
    """Breadth-first hop count over (a, b) parent/spouse edges, ignoring direction."""
    adj = {}
    for a, b in edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    seen, todo = {start: 0}, deque([start])
    while todo:
        cur = todo.popleft()
        if cur == goal:
            return seen[cur]
        for nxt in adj.get(cur, ()):
            if nxt not in seen:
                seen[nxt] = seen[cur] + 1
                todo.append(nxt)
    return None


def record_answer(kb, record):
    """Answer key of an emitted record, recomputed by brute force.

    Returns (models, key); the key is only meaningful when exactly one
    placement satisfies the recorded statements.
    """
    from score_forge.logic import parse_form

    pz = record["puzzle"]
    sc = kb.scenario(record["scenario"])
    ents = [kb.entities[e] for e in pz["entities"]]
    by_id = {e.id: e for e in ents}
    found = models(kb, sc, ents, [parse_form(s) for s in pz["statements"]])
    if len(found) != 1:
        return found, None
    placement = found[0]
    qtype = record["labels"]["question_type"]
    keys = []
    for opt in pz["options"]:
        if opt["kind"] == "entity":
            query = parse_form(pz["query"])[0]
            ground = tuple(opt["value"] if x == "?" else x for x in query)
            if holds(kb, sc, placement, by_id, ground):
                keys.append(opt["key"])
        elif opt["kind"] == "statement":
            form, truth = parse_form(opt["value"])
            if (holds(kb, sc, placement, by_id, form) == truth) == (qtype == "CorrectStatement"):
                keys.append(opt["key"])
    if not keys and any(o["kind"] == "none" for o in pz["options"]):
        keys = ["D"]
    return found, sorted(keys)
