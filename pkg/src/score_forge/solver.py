"""Brute-force model checker for statement sets.

Every legal injective slot -> entity assignment is enumerated once into an
``(N, k)`` array; each statement is interpreted directly against the layout
and the entity properties (never through the rules) and becomes a boolean mask
over the N assignments.  Uniqueness is then a conjunction of masks.

Term semantics: an entity id denotes its own slot, ``#slot`` the slot itself,
and a descriptor ``prop:value`` is existential ("some item that is red").
"""

from __future__ import annotations

import itertools
import weakref
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import NoConsistentAssignment, NotUnique, VocabularyMismatch
from .kb import Entity, KnowledgeBase, Scenario, passes
from .logic import fmt_value, split_descriptor, term_kind
from .reasoner import Fact, slot_env

HOLE = "?"

Statement = Union[Fact, tuple]

_TABLES: "weakref.WeakKeyDictionary[KnowledgeBase, dict]" = weakref.WeakKeyDictionary()


def _kb_cache(kb: KnowledgeBase) -> dict:
    try:
        return _TABLES[kb]
    except KeyError:
        cache = _TABLES[kb] = {}
        return cache


def as_key(statement: Statement) -> tuple[tuple, bool]:
    if isinstance(statement, Fact):
        return statement.key
    form, truth = statement
    return form, truth


class AssignmentSpace:
    """All legal placements of ``candidates`` into the scenario's slots."""

    def __init__(self, kb: KnowledgeBase, scenario: Scenario, candidates: Sequence[Entity],
                 statements: Iterable[Statement] = ()):
        if len(candidates) < len(scenario.slots):
            raise ValueError(f"{len(candidates)} candidates cannot fill {len(scenario.slots)} slots")
        self.kb = kb
        self.scenario = scenario
        self.candidates = list(candidates)
        self.index = {e.id: i for i, e in enumerate(self.candidates)}
        self.slot_index = {s: j for j, s in enumerate(scenario.slot_ids)}
        self.statements: list[Statement] = []
        self._masks: dict[tuple, np.ndarray] = {}
        self._terms: dict[str, np.ndarray] = {}
        self.P = self._enumerate()
        n, k = len(self.candidates), len(scenario.slots)
        self.Q = np.full((len(self.P), n), -1, dtype=np.int16)
        rows = np.arange(len(self.P))[:, None]
        self.Q[rows, self.P] = np.arange(k, dtype=np.int16)[None, :]
        for st in statements:
            self.add(st)

    @property
    def size(self) -> int:
        return len(self.P)

    def _enumerate(self) -> np.ndarray:
        cons = self.scenario.slot_constraints
        allowed = tuple(tuple(i for i, e in enumerate(self.candidates) if passes(cons[s], e))
                        for s in self.scenario.slot_ids)
        # the enumeration depends only on which candidate may go where
        cache = _kb_cache(self.kb)
        key = ("perm", len(self.candidates), allowed)
        if key not in cache:
            n, k = len(self.candidates), len(allowed)
            ok = [set(a) for a in allowed]
            rows = [p for p in itertools.permutations(range(n), k)
                    if all(p[j] in ok[j] for j in range(k))]
            cache[key] = np.array(rows, dtype=np.int16).reshape(len(rows), k)
        return cache[key]

    # -- statements ----------------------------------------------------------

    def check_vocabulary(self, form: tuple) -> None:
        sc = self.scenario
        pred = form[0]
        if pred == "rel" and form[1] not in sc.relation_vocab:
            raise VocabularyMismatch(f"relation {form[1]!r} is not admissible in {sc.id}")
        if pred == "prop" and form[2] not in self.kb.properties:
            raise VocabularyMismatch(f"property {form[2]!r} is not declared")
        if pred == "at" and form[2] not in self.slot_index:
            raise VocabularyMismatch(f"slot {form[2]!r} is not part of {sc.id}")
        if pred == "in" and form[2] not in {r.id for r in sc.regions}:
            raise VocabularyMismatch(f"region {form[2]!r} is not part of {sc.id}")
        terms = (form[2], form[3]) if pred == "rel" else (form[1],)
        for t in terms:
            kind = term_kind(t)
            if kind == "entity" and t not in self.index:
                raise VocabularyMismatch(f"entity {t!r} is not a candidate")
            if kind == "occupant" and t[1:] not in self.slot_index:
                raise VocabularyMismatch(f"slot {t[1:]!r} is not part of {sc.id}")
            if kind == "descriptor" and split_descriptor(t)[0] not in self.kb.properties:
                raise VocabularyMismatch(f"descriptor {t!r} uses an undeclared property")

    def add(self, statement: Statement) -> None:
        form, _ = as_key(statement)
        self.check_vocabulary(form)
        self.statements.append(statement)

    def with_statements(self, statements: Iterable[Statement]) -> "AssignmentSpace":
        """A view sharing enumeration and mask caches but with other statements."""
        other = object.__new__(AssignmentSpace)
        other.__dict__.update(self.__dict__)
        other.statements = []
        for st in statements:
            other.add(st)
        return other

    # -- vector semantics ----------------------------------------------------------

    def _term_matrix(self, term: str) -> np.ndarray:
        """(N, k) bool: which slots the term may denote under each assignment."""
        m = self._terms.get(term)
        if m is None:
            m = self._terms[term] = self._build_term_matrix(term)
        return m

    def _build_term_matrix(self, term: str) -> np.ndarray:
        k = len(self.scenario.slots)
        kind = term_kind(term)
        if kind == "entity":
            return self.Q[:, self.index[term]][:, None] == np.arange(k)[None, :]
        if kind == "occupant":
            row = np.zeros(k, dtype=bool)
            row[self.slot_index[term[1:]]] = True
            return np.broadcast_to(row, (self.size, k))
        prop, raw = split_descriptor(term)
        has = np.array([fmt_value(e.properties.get(prop)) == raw if prop in e.properties else False
                        for e in self.candidates])
        return has[self.P]

    def _slot_vector(self, term: str) -> Optional[np.ndarray]:
        """(N,) slot index of a term that denotes exactly one slot, else None."""
        kind = term_kind(term)
        if kind == "entity":
            return self.Q[:, self.index[term]]
        if kind == "occupant":
            return np.full(self.size, self.slot_index[term[1:]], dtype=np.int16)
        return None

    def _relation_at(self, rid: str, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        """Truth of ``rid`` between the slots v1[a] and v2[a] for each assignment a."""
        dep = self.kb.relation_dependency[rid]
        rows = np.arange(self.size)
        if dep == "slots":
            return self._tables(rid)[v1, v2]
        e1, e2 = self.P[rows, v1], self.P[rows, v2]
        if dep == "props":
            return self._tables(rid)[e1, e2]
        return self._tables(rid)[e1, e2, v1, v2]

    def _tables(self, rid: str) -> np.ndarray:
        """Cached truth table: (k, k) over slots, (n, n) over entities, or both."""
        rel = self.kb.relations[rid]
        dep = self.kb.relation_dependency[rid]
        sc = self.scenario
        k = len(sc.slots)
        cache = _kb_cache(self.kb)
        if dep == "slots":
            key = ("geom", sc.id, rid)
            if key not in cache:
                envs = [slot_env(sc, s, None) for s in sc.slot_ids]
                cache[key] = np.array([[i != j and rel.holds({"a": envs[i], "b": envs[j]})
                                        for j in range(k)] for i in range(k)], dtype=bool)
            return cache[key]
        ids = tuple(e.id for e in self.candidates)
        n = len(ids)
        if dep == "props":
            key = ("props", rid, ids)
            if key not in cache:
                envs = [dict(e.properties, id=e.id) for e in self.candidates]
                cache[key] = np.array([[i != j and rel.holds({"a": envs[i], "b": envs[j]})
                                        for j in range(n)] for i in range(n)], dtype=bool)
            return cache[key]
        key = ("mixed", sc.id, rid, ids)
        if key not in cache:
            full = np.zeros((n, n, k, k), dtype=bool)
            for a, ea in enumerate(self.candidates):
                for b, eb in enumerate(self.candidates):
                    if a == b:
                        continue
                    for i, si in enumerate(sc.slot_ids):
                        for j, sj in enumerate(sc.slot_ids):
                            if i != j:
                                full[a, b, i, j] = rel.holds({"a": slot_env(sc, si, ea),
                                                             "b": slot_env(sc, sj, eb)})
            cache[key] = full
        return cache[key]

    def _relation_table(self, rid: str) -> np.ndarray:
        """(N, k, k) bool truth of ``rid`` between slot pairs under each assignment."""
        dep = self.kb.relation_dependency[rid]
        k = len(self.scenario.slots)
        table = self._tables(rid)
        if dep == "slots":
            return np.broadcast_to(table, (self.size, k, k))
        if dep == "props":
            return table[self.P[:, :, None], self.P[:, None, :]]
        ii = np.arange(k)
        return table[self.P[:, :, None], self.P[:, None, :], ii[None, :, None], ii[None, None, :]]

    def _form_mask(self, form: tuple) -> np.ndarray:
        pred = form[0]
        if pred == "at":
            return self._term_matrix(form[1])[:, self.slot_index[form[2]]].copy()
        if pred == "in":
            idx = [self.slot_index[s] for s in self.scenario.region_slots(form[2])]
            return self._term_matrix(form[1])[:, idx].any(axis=1)
        if pred == "prop":
            _, term, prop, value = form
            has = np.array([_has_value(e, prop, value) for e in self.candidates])
            occupied = has[self.P]
            return (self._term_matrix(term) & occupied).any(axis=1)
        _, rid, t1, t2 = form
        v1, v2 = self._slot_vector(t1), self._slot_vector(t2)
        if v1 is not None and v2 is not None:
            return self._relation_at(rid, v1, v2)
        m1 = self._term_matrix(t1)
        m2 = self._term_matrix(t2)
        table = self._relation_table(rid)
        return (m1[:, :, None] & m2[:, None, :] & table).any(axis=(1, 2))

    def mask(self, statement: Statement) -> np.ndarray:
        """Assignments under which the statement (with its truth value) holds."""
        form, truth = as_key(statement)
        m = self._masks.get(form)
        if m is None:
            self.check_vocabulary(form)
            m = self._form_mask(form)
            m.setflags(write=False)
            self._masks[form] = m
        return m if truth else ~m

    def consistent_mask(self, statements: Optional[Iterable[Statement]] = None) -> np.ndarray:
        out = np.ones(self.size, dtype=bool)
        for st in (self.statements if statements is None else statements):
            out &= self.mask(st)
        return out

    def assignment(self, row: int) -> dict[str, str]:
        return {s: self.candidates[self.P[row, j]].id for j, s in enumerate(self.scenario.slot_ids)}

    def row_of(self, assignment: Mapping[str, str]) -> int:
        target = np.array([self.index[assignment[s]] for s in self.scenario.slot_ids])
        hits = np.nonzero((self.P == target).all(axis=1))[0]
        if len(hits) == 0:
            raise KeyError("assignment is not legal in this space")
        return int(hits[0])

    # -- scalar semantics (cross-check for the vector path) ------------------

    def evaluate(self, statement: Statement, assignment: Mapping[str, str]) -> bool:
        form, truth = as_key(statement)
        return evaluate_form(self.kb, self.scenario, {e.id: e for e in self.candidates},
                             assignment, form) == truth


def _has_value(entity: Entity, prop: str, value: Any) -> bool:
    # compare printed forms so that 2 and 2.0 agree but True and 1 do not
    return prop in entity.properties and fmt_value(entity.properties[prop]) == fmt_value(value)


def _denotes(term: str, assignment: Mapping[str, str], entities: Mapping[str, Entity]) -> list[str]:
    kind = term_kind(term)
    if kind == "entity":
        return [s for s, e in assignment.items() if e == term]
    if kind == "occupant":
        return [term[1:]]
    prop, raw = split_descriptor(term)
    return [s for s, e in assignment.items()
            if prop in entities[e].properties and fmt_value(entities[e].properties[prop]) == raw]


def evaluate_form(kb: KnowledgeBase, scenario: Scenario, entities: Mapping[str, Entity],
                  assignment: Mapping[str, str], form: tuple) -> bool:
    """Truth of a form under one assignment, computed slot by slot."""
    pred = form[0]
    if pred == "at":
        return form[2] in _denotes(form[1], assignment, entities)
    if pred == "in":
        region = set(scenario.region_slots(form[2]))
        return any(s in region for s in _denotes(form[1], assignment, entities))
    if pred == "prop":
        _, term, prop, value = form
        return any(_has_value(entities[assignment[s]], prop, value)
                   for s in _denotes(term, assignment, entities))
    _, rid, t1, t2 = form
    rel = kb.relations[rid]
    for s1 in _denotes(t1, assignment, entities):
        for s2 in _denotes(t2, assignment, entities):
            if s1 != s2 and rel.holds({"a": slot_env(scenario, s1, entities[assignment[s1]]),
                                       "b": slot_env(scenario, s2, entities[assignment[s2]])}):
                return True
    return False


# -- operations ----------------------------------------------------------------

def consistent_assignments(space: AssignmentSpace) -> list[dict[str, str]]:
    rows = np.nonzero(space.consistent_mask())[0]
    return [space.assignment(int(r)) for r in rows]


def count_consistent(space: AssignmentSpace, statements: Optional[Iterable[Statement]] = None) -> int:
    return int(space.consistent_mask(statements).sum())


def is_unique(space: AssignmentSpace) -> bool:
    n = count_consistent(space)
    if n == 0:
        raise NoConsistentAssignment("the statement set is contradictory")
    return n == 1


def prune_to_minimal(space: AssignmentSpace) -> list[Statement]:
    """Drop statements newest-first while the set stays uniquely determining."""
    kept = list(space.statements)
    masks = [space.mask(st) for st in kept]
    for i in range(len(kept) - 1, -1, -1):
        rest = np.ones(space.size, dtype=bool)
        for j, m in enumerate(masks):
            if j != i and m is not None:
                rest &= m
        if rest.sum() == 1:
            masks[i] = None
    return [st for st, m in zip(kept, masks) if m is not None]


def is_one_minimal(space: AssignmentSpace, statements: Sequence[Statement]) -> bool:
    if count_consistent(space, statements) != 1:
        return False
    return all(count_consistent(space, statements[:i] + statements[i + 1:]) > 1
               for i in range(len(statements)))


def completions(space: AssignmentSpace, query: tuple) -> list[tuple[Any, tuple]]:
    """(filler, ground form) for every way of filling the query's hole."""
    pos = query.index(HOLE)
    pred = query[0]
    if pred == "at" and pos == 2:
        fillers: list = list(space.scenario.slot_ids)
    elif pred == "in" and pos == 2:
        fillers = [r.id for r in space.scenario.regions]
    elif pred == "rel" and pos == 1:
        fillers = list(space.scenario.relation_vocab)
    elif pred == "prop" and pos == 3:
        prop = space.kb.properties[query[2]]
        fillers = list(prop.values or [])
    else:
        fillers = [e.id for e in space.candidates]
    out = []
    for f in fillers:
        ground = list(query)
        ground[pos] = f
        if pred == "rel" and pos in (2, 3) and ground[2] == ground[3]:
            continue
        out.append((f, tuple(ground)))
    return out


def answer_set(space: AssignmentSpace, query: tuple, mode: str = "precise") -> set:
    """Fillers of the query hole that are true in the unique model (precise)
    or in every consistent model (vague)."""
    consistent = space.consistent_mask()
    n = int(consistent.sum())
    if n == 0:
        raise NoConsistentAssignment("the statement set is contradictory")
    if mode == "precise" and n != 1:
        raise NotUnique(f"{n} assignments remain; a precise query needs exactly one")
    out = set()
    for filler, ground in completions(space, query):
        if space.mask((ground, True))[consistent].all():
            out.add(filler)
    return out
