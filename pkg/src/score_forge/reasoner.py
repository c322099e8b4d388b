"""Forward chaining over a grounded scenario instance.

The fact base starts from the placements, the properties of the placed
entities and the base relations implied by the layout.  Rules are then applied
in rounds (semi-naive evaluation): round ``r`` only considers premise tuples
that use at least one fact first derived in round ``r - 1``.  Facts found in
round ``r`` therefore have depth ``r``, which is the length of their shortest
derivation, and the first provenance recorded for a fact is a shortest one.
"""

from __future__ import annotations

from bisect import bisect_left
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .errors import ConstraintViolation, NonInjectiveAssignment, NotDerivable
from .kb import Entity, KnowledgeBase, Scenario, passes
from .logic import (Pattern, Rule, format_form, instantiate, instantiate_arg, match,
                    split_descriptor, term_kind)


@dataclass(frozen=True)
class Labels:
    domains: frozenset = frozenset()
    entities: frozenset = frozenset()
    properties: frozenset = frozenset()
    relations: frozenset = frozenset()

    def __or__(self, other: "Labels") -> "Labels":
        return Labels(self.domains | other.domains, self.entities | other.entities,
                      self.properties | other.properties, self.relations | other.relations)

    def as_dict(self) -> dict[str, list[str]]:
        return {k: sorted(getattr(self, k)) for k in ("domains", "entities", "properties", "relations")}


@dataclass
class Fact:
    id: int
    form: tuple
    truth: bool = True
    precision: str = "precise"
    labels: Labels = field(default_factory=Labels)
    rule: Optional[str] = None
    premises: tuple[int, ...] = ()
    depth: int = 0
    time: Optional[int] = None

    @property
    def key(self) -> tuple:
        return (self.form, self.truth)

    @property
    def pred(self) -> str:
        return self.form[0]

    def __str__(self) -> str:
        return format_form(self.form, self.truth)


class FactBase:
    """Facts of one instance, indexed by (form, truth) and by leading argument."""

    def __init__(self, kb: KnowledgeBase, scenario: Scenario, assignment: Mapping[str, str]):
        self.kb = kb
        self.scenario = scenario
        self.assignment = dict(assignment)
        self.facts: list[Fact] = []
        self._by_key: dict[tuple, Fact] = {}
        self._by_pred: dict[str, list[Fact]] = defaultdict(list)
        self._by_head: dict[tuple, list[Fact]] = defaultdict(list)
        self._by_head2: dict[tuple, list[Fact]] = defaultdict(list)
        self.closed = False
        self.rounds = 0

    # -- container protocol
    def __len__(self) -> int:
        return len(self.facts)

    def __iter__(self) -> Iterator[Fact]:
        return iter(self.facts)

    def __contains__(self, key) -> bool:
        if isinstance(key, Fact):
            key = key.key
        return key in self._by_key

    def get(self, form: tuple, truth: bool = True) -> Optional[Fact]:
        return self._by_key.get((form, truth))

    def by_id(self, fact_id: int) -> Fact:
        return self.facts[fact_id]

    def keys(self) -> set[tuple]:
        return set(self._by_key)

    @property
    def entity_ids(self) -> list[str]:
        return list(self.assignment.values())

    def add(self, form: tuple, truth: bool = True, rule: Optional[str] = None,
            premises: Sequence[int] = (), labels: Optional[Labels] = None,
            time: Optional[int] = None) -> Optional[Fact]:
        """Insert a fact; duplicates are dropped and ``None`` returned."""
        key = (form, truth)
        if key in self._by_key:
            return None
        if premises:
            prem = [self.facts[i] for i in premises]
            depth = 1 + max(p.depth for p in prem)
            if labels is None:
                labels = Labels()
                for p in prem:
                    labels = labels | p.labels
        else:
            depth = 0
            if labels is None:
                labels = self._own_labels(form)
        fact = Fact(id=len(self.facts), form=form, truth=truth, precision=self._precision(form),
                    labels=labels, rule=rule, premises=tuple(premises), depth=depth, time=time)
        self.facts.append(fact)
        self._by_key[key] = fact
        self._by_pred[form[0]].append(fact)
        self._by_head[(form[0], form[1])].append(fact)
        self._by_head2[(form[0], form[1], form[2])].append(fact)
        self.closed = False
        return fact

    def _precision(self, form: tuple) -> str:
        if form[0] == "rel" and form[1] in self.kb.relations and self.kb.relations[form[1]].vague:
            return "vague"
        return "precise"

    def _own_labels(self, form: tuple) -> Labels:
        return own_labels(self.kb, self.scenario, form)

    def candidates(self, pattern: Pattern, env: dict) -> list[Fact]:
        """Facts that may match ``pattern`` under ``env``, in id order."""
        first = _resolve(pattern.args[0], env)
        if first is None:
            return self._by_pred.get(pattern.pred, [])
        second = _resolve(pattern.args[1], env)
        if second is None:
            return self._by_head.get((pattern.pred, first), [])
        return self._by_head2.get((pattern.pred, first, second), [])


def _resolve(arg, env: dict):
    """Ground value of a pattern argument if ``env`` fixes it, else None."""
    if arg.kind == "const":
        return arg.value
    if arg.kind == "var":
        return env.get(arg.value)
    try:
        return instantiate_arg(arg, env)
    except KeyError:
        return None


def own_labels(kb: KnowledgeBase, scenario: Scenario, form: tuple) -> Labels:
    """Labels read directly off a form's constituents."""
    pred = form[0]
    domains, entities, props, rels = set(), set(), set(), set()
    terms = (form[2], form[3]) if pred == "rel" else (form[1],)
    for t in terms:
        kind = term_kind(t)
        if kind == "entity":
            entities.add(t)
        elif kind == "descriptor":
            p, _ = split_descriptor(t)
            props.add(p)
            if p in kb.properties:
                domains.add(kb.properties[p].domain)
    if pred == "rel":
        rels.add(form[1])
        domains.add(kb.relations[form[1]].domain if form[1] in kb.relations else scenario.domain)
    elif pred == "prop":
        props.add(form[2])
        domains.add(kb.properties[form[2]].domain if form[2] in kb.properties else scenario.domain)
    else:
        domains.add(scenario.domain)
    return Labels(frozenset(domains), frozenset(entities), frozenset(props), frozenset(rels))


def slot_env(scenario: Scenario, slot_id: str, entity: Optional[Entity]) -> dict:
    """Namespace seen by relation ``holds`` expressions for one slot."""
    env = dict(entity.properties) if entity is not None else {}
    env.update(scenario.slot(slot_id).attrs)
    env["slot"] = slot_id
    env["id"] = entity.id if entity is not None else None
    return env


def check_assignment(scenario: Scenario, assignment: Mapping[str, str],
                     entities: Mapping[str, Entity]) -> None:
    if set(assignment) != set(scenario.slot_ids):
        raise ConstraintViolation(
            f"assignment covers {sorted(assignment)}, scenario has {list(scenario.slot_ids)}")
    values = list(assignment.values())
    if len(set(values)) != len(values):
        raise NonInjectiveAssignment("an entity is placed in more than one slot")
    cons = scenario.slot_constraints
    for slot, eid in assignment.items():
        if eid not in entities:
            raise ConstraintViolation(f"entity {eid!r} is not among the instance entities")
        if not passes(cons[slot], entities[eid]):
            raise ConstraintViolation(f"{eid} does not meet the constraint of slot {slot}")


def init_facts(kb: KnowledgeBase, scenario: Scenario, assignment: Mapping[str, str],
               entities: Iterable[Entity]) -> FactBase:
    """Depth-0 facts: placements, entity properties and base layout relations."""
    ents = {e.id: e for e in entities}
    check_assignment(scenario, assignment, ents)
    fb = FactBase(kb, scenario, assignment)
    time_attr = scenario.cycle_attr if scenario.domain == "time" else None
    for slot in scenario.slot_ids:
        eid = assignment[slot]
        attrs = scenario.slot(slot).attrs
        fb.add(("at", eid, slot), time=attrs.get(time_attr) if time_attr else None)
    for slot in scenario.slot_ids:
        ent = ents[assignment[slot]]
        for prop, value in ent.properties.items():
            fb.add(("prop", ent.id, prop, value))
    envs = {s: slot_env(scenario, s, ents[assignment[s]]) for s in scenario.slot_ids}
    for rid in scenario.relation_vocab:
        rel = kb.relations[rid]
        if not rel.base:
            continue
        for s1 in scenario.slot_ids:
            for s2 in scenario.slot_ids:
                if s1 != s2 and rel.holds({"a": envs[s1], "b": envs[s2]}):
                    fb.add(("rel", rid, assignment[s1], assignment[s2]))
    return fb


def from_axioms(kb: KnowledgeBase, scenario: Scenario, assignment: Mapping[str, str],
                axioms: Iterable[tuple[tuple, bool]]) -> FactBase:
    """A fact base whose depth-0 facts are the given (form, truth) pairs."""
    fb = FactBase(kb, scenario, assignment)
    for form, truth in axioms:
        fb.add(form, truth)
    return fb


# -- chaining ----------------------------------------------------------------

def _guard_ok(rule: Rule, env: dict) -> bool:
    return rule.guard is None or rule.guard(env)


def _window(facts: list[Fact], lo: int, hi: int) -> list[Fact]:
    """Facts of an id-ordered index list with lo <= id < hi."""
    a = bisect_left(facts, lo, key=lambda f: f.id)
    b = bisect_left(facts, hi, key=lambda f: f.id)
    return facts[a:b]


def _apply_rule(fb: FactBase, rule: Rule, delta_from: int, round_start: int,
                out: list) -> None:
    """Collect derivations that use at least one fact new in the previous round.

    Facts with ``delta_from <= id < round_start`` are the previous round's
    delta; ids below ``delta_from`` are old.
    """
    prem = rule.premises
    conclude = rule.conclusion
    if len(prem) == 1:
        for f in _window(fb.candidates(prem[0], {}), delta_from, round_start):
            env = match(prem[0], f.form, f.truth, {})
            if env is not None and _guard_ok(rule, env):
                out.append((rule, instantiate(conclude, env), conclude.truth, (f.id,)))
        return
    p1, p2 = prem
    # first premise new, second anything seen before this round
    for f1 in _window(fb.candidates(p1, {}), delta_from, round_start):
        env1 = match(p1, f1.form, f1.truth, {})
        if env1 is None:
            continue
        for f2 in _window(fb.candidates(p2, env1), 0, round_start):
            env = match(p2, f2.form, f2.truth, env1)
            if env is not None and _guard_ok(rule, env):
                out.append((rule, instantiate(conclude, env), conclude.truth, (f1.id, f2.id)))
    # first premise old, second new
    if delta_from == 0:
        return
    for f2 in _window(fb.candidates(p2, {}), delta_from, round_start):
        env2 = match(p2, f2.form, f2.truth, {})
        if env2 is None:
            continue
        for f1 in _window(fb.candidates(p1, env2), 0, delta_from):
            env = match(p1, f1.form, f1.truth, env2)
            if env is not None and _guard_ok(rule, env):
                out.append((rule, instantiate(conclude, env), conclude.truth, (f1.id, f2.id)))


def chain_to_fixpoint(fb: FactBase, rules: Sequence[Rule], max_rounds: int = 1000) -> FactBase:
    """Apply ``rules`` until no new fact appears.  Mutates and returns ``fb``."""
    delta_from = 0
    rounds = 0
    while True:
        round_start = len(fb.facts)
        if delta_from == round_start:
            break
        found: list = []
        for rule in rules:
            _apply_rule(fb, rule, delta_from, round_start, found)
        for rule, form, truth, premises in found:
            fb.add(form, truth, rule=rule.id, premises=premises)
        delta_from = round_start
        rounds += 1
        if rounds > max_rounds:
            raise RuntimeError("rule set does not reach a fixpoint")
    fb.rounds = rounds
    fb.closed = True
    return fb


def close_instance(kb: KnowledgeBase, scenario: Scenario, assignment: Mapping[str, str],
                   entities: Iterable[Entity]) -> FactBase:
    fb = init_facts(kb, scenario, assignment, entities)
    return chain_to_fixpoint(fb, kb.rules_for(scenario.id))


# -- provenance ----------------------------------------------------------------

def provenance(fb: FactBase, fact_ids: Iterable[int]) -> set[int]:
    """Ids of all derived facts used to derive the given facts (themselves included)."""
    seen: set[int] = set()
    stack = list(fact_ids)
    while stack:
        fid = stack.pop()
        if fid in seen:
            continue
        fact = fb.facts[fid]
        if fact.rule is None:
            continue
        seen.add(fid)
        stack.extend(fact.premises)
    return seen


def chain_steps(fb: FactBase, fact_ids: Iterable[int]) -> list[tuple[str, int]]:
    """Rule applications behind the given facts, premises before conclusions."""
    ids = provenance(fb, fact_ids)
    ordered = sorted(ids, key=lambda i: (fb.facts[i].depth, i))
    return [(fb.facts[i].rule, i) for i in ordered]


def derivation_chain(fb: FactBase, goal: tuple[tuple, bool], axioms: Iterable[tuple[tuple, bool]],
                     rules: Optional[Sequence[Rule]] = None) -> list[tuple[str, int]]:
    """Re-chain from ``axioms`` and return the shortest-depth derivation of ``goal``.

    Step fact ids refer to the re-chained base, which is returned as the
    ``base`` attribute of the result list.
    """
    if rules is None:
        rules = fb.kb.rules_for(fb.scenario.id)
    sub = chain_to_fixpoint(from_axioms(fb.kb, fb.scenario, fb.assignment, axioms), rules)
    fact = sub.get(*goal)
    if fact is None:
        raise NotDerivable(f"{format_form(*goal)} does not follow from the axioms")
    steps = DerivationSteps(chain_steps(sub, [fact.id]))
    steps.base = sub
    return steps


class DerivationSteps(list):
    base: Optional[FactBase] = None


def trace_records(fb: FactBase) -> Iterator[dict]:
    """One plain record per fact, for ``solve --trace``."""
    for f in fb.facts:
        yield {
            "id": f.id,
            "fact": str(f),
            "truth": f.truth,
            "precision": f.precision,
            "depth": f.depth,
            "rule": f.rule,
            "premises": list(f.premises),
            "labels": f.labels.as_dict(),
        }
