"""Declarative knowledge base: scenarios, entities, properties, relations, rules.

The on-disk form is a YAML document tree (one file per domain) with the
top-level keys ``locales``, ``properties``, ``relations``, ``rules``,
``entities`` and ``scenarios``.  :func:`load_kb` links a document tree into an
immutable :class:`KnowledgeBase`; :func:`validate` checks the semantic
invariants and returns findings as data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import yaml

from .errors import DanglingReference, DuplicateId, SchemaError, UnknownScenario
from .expr import Expr, ExprError
from .logic import PatternError, Rule, descriptor

SCHEMA_VERSION = 1
DOMAINS = ("space", "time", "social", "nature", "mix")
PROPERTY_TYPES = ("enum", "number", "bool")
TOP_LEVEL_KEYS = ("locales", "properties", "relations", "rules", "entities", "scenarios")


@dataclass(frozen=True)
class Property:
    id: str
    type: str
    domain: str
    values: Optional[tuple] = None
    unit: Optional[str] = None
    weight: float = 1.0
    exclusive: bool = False

    def accepts(self, value: Any) -> bool:
        if self.type == "bool":
            return isinstance(value, bool)
        if self.type == "number":
            return isinstance(value, (int, float)) and not isinstance(value, bool)
        return self.values is None or value in self.values


@dataclass(frozen=True)
class Relation:
    id: str
    domain: str
    holds: Expr
    inverse: Optional[str] = None
    symmetric: bool = False
    base: bool = False
    vague: bool = False
    weight: float = 1.0


@dataclass(frozen=True)
class Slot:
    id: str
    attrs: Mapping[str, Any]
    constraint: Optional[Expr] = None


@dataclass(frozen=True)
class Region:
    id: str
    where: Expr


@dataclass(frozen=True)
class Scenario:
    id: str
    domain: str
    slots: tuple[Slot, ...]
    relation_vocab: tuple[str, ...]
    cyclic: bool = False
    cycle_attr: Optional[str] = None
    constraint: Optional[Expr] = None
    regions: tuple[Region, ...] = ()
    descriptor_properties: tuple[str, ...] = ()
    intro_templates: Mapping[str, str] = field(default_factory=dict)

    @property
    def slot_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.slots)

    @property
    def slot_constraints(self) -> dict[str, tuple[Expr, ...]]:
        out = {}
        for s in self.slots:
            exprs = tuple(e for e in (self.constraint, s.constraint) if e is not None)
            out[s.id] = exprs
        return out

    def slot(self, slot_id: str) -> Slot:
        for s in self.slots:
            if s.id == slot_id:
                return s
        raise KeyError(slot_id)

    def region(self, region_id: str) -> Region:
        for r in self.regions:
            if r.id == region_id:
                return r
        raise KeyError(region_id)

    def region_slots(self, region_id: str) -> tuple[str, ...]:
        where = self.region(region_id).where
        return tuple(s.id for s in self.slots if where(dict(s.attrs, slot=s.id)))

    def layout_attrs(self) -> set[str]:
        names = {"slot"}
        for s in self.slots:
            names.update(s.attrs)
        return names


@dataclass(frozen=True)
class Entity:
    id: str
    domain: str
    names: Mapping[str, str]
    properties: Mapping[str, Any]

    def env(self) -> dict[str, Any]:
        return dict(self.properties, id=self.id)

    def descriptors(self, props: Iterable[str]) -> list[str]:
        return [descriptor(p, self.properties[p]) for p in props if p in self.properties]


@dataclass(frozen=True, eq=False)
class KnowledgeBase:
    locales: tuple[str, ...]
    properties: Mapping[str, Property]
    relations: Mapping[str, Relation]
    rules: tuple[Rule, ...]
    entities: Mapping[str, Entity]
    scenarios: Mapping[str, Scenario]
    schema_version: int = SCHEMA_VERSION

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return (self.locales == other.locales
                and dict(self.properties) == dict(other.properties)
                and dict(self.relations) == dict(other.relations)
                and self.rules == other.rules
                and list(self.entities.items()) == list(other.entities.items())
                and list(self.scenarios.items()) == list(other.scenarios.items()))

    __hash__ = object.__hash__

    def scenario(self, scenario_id: str) -> Scenario:
        try:
            return self.scenarios[scenario_id]
        except KeyError:
            raise UnknownScenario(scenario_id) from None

    def rules_for(self, scenario_id: str) -> tuple[Rule, ...]:
        return tuple(r for r in self.rules if r.applies_to(scenario_id))

    @cached_property
    def relation_dependency(self) -> dict[str, str]:
        """Whether each relation reads slot layout, entity properties, or both."""
        layout: set[str] = {"slot"}
        for sc in self.scenarios.values():
            layout |= sc.layout_attrs()
        props = set(self.properties) | {"id"}
        out = {}
        for rel in self.relations.values():
            used = set().union(*rel.holds.attrs.values()) if rel.holds.attrs else set()
            if used <= layout:
                out[rel.id] = "slots"
            elif used <= props:
                out[rel.id] = "props"
            else:
                out[rel.id] = "mixed"
        return out


# -- loading ---------------------------------------------------------------

def _require(doc: Mapping, key: str, where: str) -> Any:
    if not isinstance(doc, Mapping) or key not in doc:
        raise SchemaError(f"{where}: missing required key {key!r}")
    return doc[key]


def _as_list(doc: Mapping, key: str) -> list:
    value = doc.get(key, [])
    if value is None:
        return []
    if not isinstance(value, list):
        raise SchemaError(f"top-level key {key!r} must be a list")
    return value


def _unique(items: list, kind: str) -> None:
    seen: set[str] = set()
    for item in items:
        if not isinstance(item, Mapping) or "id" not in item:
            raise SchemaError(f"{kind} entries must be mappings with an 'id'")
        if item["id"] in seen:
            raise DuplicateId(f"{kind} {item['id']!r} declared more than once")
        seen.add(item["id"])


def _expr(text: Optional[str], where: str) -> Optional[Expr]:
    if text is None:
        return None
    try:
        return Expr(str(text))
    except ExprError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def _check_domain(value: Any, where: str) -> str:
    if value not in DOMAINS:
        raise SchemaError(f"{where}: unknown domain {value!r}")
    return value


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: expected a number, got {value!r}")
    return float(value)


def load_kb(source: Mapping[str, Any]) -> KnowledgeBase:
    """Link a KB document tree.  Raises SchemaError / DanglingReference / DuplicateId."""
    if not isinstance(source, Mapping):
        raise SchemaError("KB document must be a mapping")
    unknown = set(source) - set(TOP_LEVEL_KEYS) - {"schema_version"}
    if unknown:
        raise SchemaError(f"unknown top-level keys: {sorted(unknown)}")
    locales = source.get("locales")
    if not isinstance(locales, list) or not locales or not all(isinstance(x, str) for x in locales):
        raise SchemaError("'locales' must be a non-empty list of strings")

    raw = {k: _as_list(source, k) for k in TOP_LEVEL_KEYS if k != "locales"}
    for key, items in raw.items():
        _unique(items, key[:-1] if key != "properties" else "property")

    properties: dict[str, Property] = {}
    for d in raw["properties"]:
        where = f"property {d['id']}"
        ptype = _require(d, "type", where)
        if ptype not in PROPERTY_TYPES:
            raise SchemaError(f"{where}: unknown type {ptype!r}")
        values = d.get("values")
        properties[d["id"]] = Property(
            id=d["id"], type=ptype, domain=_check_domain(_require(d, "domain", where), where),
            values=tuple(values) if values is not None else None, unit=d.get("unit"),
            weight=_number(d.get("weight", 1.0), where), exclusive=bool(d.get("exclusive", False)),
        )

    relations: dict[str, Relation] = {}
    for d in raw["relations"]:
        where = f"relation {d['id']}"
        relations[d["id"]] = Relation(
            id=d["id"], domain=_check_domain(_require(d, "domain", where), where),
            holds=_expr(_require(d, "holds", where), where), inverse=d.get("inverse"),
            symmetric=bool(d.get("symmetric", False)), base=bool(d.get("base", False)),
            vague=bool(d.get("vague", False)), weight=_number(d.get("weight", 1.0), where),
        )
    for rel in relations.values():
        if rel.inverse is not None and rel.inverse not in relations:
            raise DanglingReference(f"relation {rel.id}: inverse {rel.inverse!r} is not declared")

    entities: dict[str, Entity] = {}
    for d in raw["entities"]:
        where = f"entity {d['id']}"
        props = dict(d.get("properties") or {})
        for pid in props:
            if pid not in properties:
                raise DanglingReference(f"{where}: property {pid!r} is not declared")
        names = d.get("names") or {}
        if not isinstance(names, Mapping):
            raise SchemaError(f"{where}: 'names' must be a mapping")
        entities[d["id"]] = Entity(
            id=d["id"], domain=_check_domain(_require(d, "domain", where), where),
            names={loc: _compose_name(n, where) for loc, n in names.items()}, properties=props,
        )

    scenarios: dict[str, Scenario] = {}
    for d in raw["scenarios"]:
        where = f"scenario {d['id']}"
        slot_docs = _require(d, "slots", where)
        if not isinstance(slot_docs, list):
            raise SchemaError(f"{where}: 'slots' must be a list")
        _unique(slot_docs, f"{where} slot")
        slots = tuple(
            Slot(id=s["id"], attrs=dict(s.get("attrs") or {}),
                 constraint=_expr(s.get("constraint"), f"{where} slot {s['id']}"))
            for s in slot_docs
        )
        vocab = tuple(d.get("relations") or ())
        for rid in vocab:
            if rid not in relations:
                raise DanglingReference(f"{where}: relation {rid!r} is not declared")
        region_docs = d.get("regions") or []
        _unique(region_docs, f"{where} region")
        regions = tuple(Region(id=r["id"], where=_expr(_require(r, "where", where), where))
                        for r in region_docs)
        desc_props = tuple(d.get("descriptor_properties") or ())
        for pid in desc_props:
            if pid not in properties:
                raise DanglingReference(f"{where}: descriptor property {pid!r} is not declared")
        scenarios[d["id"]] = Scenario(
            id=d["id"], domain=_check_domain(_require(d, "domain", where), where), slots=slots,
            relation_vocab=vocab, cyclic=bool(d.get("cyclic", False)),
            cycle_attr=d.get("cycle_attr"), constraint=_expr(d.get("constraint"), where),
            regions=regions, descriptor_properties=desc_props,
            intro_templates=dict(d.get("intro") or {}),
        )
    region_owner: dict[str, str] = {}
    for sc in scenarios.values():
        for r in sc.regions:
            if r.id in region_owner:
                raise DuplicateId(f"region {r.id!r} declared in {region_owner[r.id]} and {sc.id}")
            region_owner[r.id] = sc.id

    rules: list[Rule] = []
    for d in raw["rules"]:
        where = f"rule {d['id']}"
        scen = d.get("scenarios")
        for sid in scen or ():
            if sid not in scenarios:
                raise DanglingReference(f"{where}: scenario {sid!r} is not declared")
        try:
            rule = Rule.parse(d["id"], _require(d, "rule", where), _require(d, "kind", where),
                              guard=d.get("if"), scenarios=scen)
        except (PatternError, ExprError) as exc:
            raise SchemaError(f"{where}: {exc}") from None
        _check_rule_refs(rule, relations, properties, scenarios, region_owner)
        rules.append(rule)

    rules.extend(_generated_rules(relations, properties, scenarios))
    version = source.get("schema_version", SCHEMA_VERSION)
    return KnowledgeBase(
        locales=tuple(locales), properties=properties, relations=relations, rules=tuple(rules),
        entities=entities, scenarios=scenarios, schema_version=version,
    )


def _compose_name(name: Any, where: str) -> str:
    # Chinese person names are written as surname + given name with no space.
    if isinstance(name, Mapping):
        if set(name) != {"surname", "given"}:
            raise SchemaError(f"{where}: structured names need exactly 'surname' and 'given'")
        return f"{name['surname']}{name['given']}"
    if not isinstance(name, str):
        raise SchemaError(f"{where}: name must be a string, got {name!r}")
    return name


def _check_rule_refs(rule: Rule, relations, properties, scenarios, regions) -> None:
    slot_ids = {s.id for sc in scenarios.values() for s in sc.slots}
    for pat in (*rule.premises, rule.conclusion):
        a = pat.args
        if pat.pred == "rel" and a[0].kind == "const" and a[0].value not in relations:
            raise DanglingReference(f"rule {rule.id}: relation {a[0].value!r} is not declared")
        if pat.pred == "prop" and a[1].kind == "const" and a[1].value not in properties:
            raise DanglingReference(f"rule {rule.id}: property {a[1].value!r} is not declared")
        if pat.pred == "in" and a[1].kind == "const" and a[1].value not in regions:
            raise DanglingReference(f"rule {rule.id}: region {a[1].value!r} is not declared")
        if pat.pred == "at" and a[1].kind == "const" and a[1].value not in slot_ids:
            raise DanglingReference(f"rule {rule.id}: slot {a[1].value!r} is not declared")


def _generated_rules(relations, properties, scenarios) -> list[Rule]:
    """Mechanical rules implied by relation/region/property metadata."""
    out = []
    for rel in relations.values():
        # scoped to the scenarios that can talk about the relation at all
        users = [sc.id for sc in scenarios.values() if rel.id in sc.relation_vocab] or None
        if rel.inverse is not None:
            out.append(Rule.parse(f"inv:{rel.id}", f"rel({rel.id}, D, U) => rel({rel.inverse}, U, D)",
                                  "equivalence", scenarios=users, generated=True))
        if rel.symmetric:
            out.append(Rule.parse(f"sym:{rel.id}", f"rel({rel.id}, D, U) => rel({rel.id}, U, D)",
                                  "equivalence", scenarios=users, generated=True))
    for sc in scenarios.values():
        for region in sc.regions:
            for sid in sc.region_slots(region.id):
                out.append(Rule.parse(f"region:{region.id}:{sid}", f"at(D, {sid}) => in(D, {region.id})",
                                      "equivalence", scenarios=[sc.id], generated=True))
    for prop in properties.values():
        if prop.exclusive and prop.values:
            for v1 in prop.values:
                for v2 in prop.values:
                    if v1 != v2:
                        out.append(Rule.parse(f"excl:{prop.id}:{v1}:{v2}",
                                              f"prop(X, {prop.id}, {v1}) => ~prop(X, {prop.id}, {v2})",
                                              "equivalence", generated=True))
    return out


def read_kb_document(path: str | Path) -> dict[str, Any]:
    """Read one YAML file or merge every ``*.yaml`` file of a directory."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.glob("*.yaml"))
        if not files:
            raise SchemaError(f"no *.yaml files in {path}")
    elif path.exists():
        files = [path]
    else:
        raise SchemaError(f"KB path {path} does not exist")
    merged: dict[str, Any] = {"locales": []}
    for f in files:
        try:
            doc = yaml.safe_load(f.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise SchemaError(f"{f.name}: {exc}") from None
        if not isinstance(doc, Mapping):
            raise SchemaError(f"{f.name}: document must be a mapping")
        for key, value in doc.items():
            if key == "locales":
                merged["locales"].extend(x for x in value if x not in merged["locales"])
            elif key == "schema_version":
                merged[key] = value
            elif key in TOP_LEVEL_KEYS:
                if not isinstance(value, list):
                    raise SchemaError(f"{f.name}: {key!r} must be a list")
                merged.setdefault(key, []).extend(value)
            else:
                raise SchemaError(f"{f.name}: unknown top-level key {key!r}")
    return merged


def load_kb_path(path: str | Path) -> KnowledgeBase:
    return load_kb(read_kb_document(path))


def seed_kb_path() -> Path:
    return Path(__file__).parent / "data" / "seed"


def load_seed_kb() -> KnowledgeBase:
    return load_kb_path(seed_kb_path())


def dump_kb(kb: KnowledgeBase) -> dict[str, Any]:
    """Serialize back to a document tree (generated rules are omitted)."""
    def opt(d: dict) -> dict:
        # ``is``-style tests: a 0.0 weight must survive even though 0.0 == False
        return {k: v for k, v in d.items()
                if v is not None and v is not False and not (isinstance(v, (list, dict, tuple)) and not v)}

    return {
        "schema_version": kb.schema_version,
        "locales": list(kb.locales),
        "properties": [opt({"id": p.id, "type": p.type, "domain": p.domain,
                            "values": list(p.values) if p.values is not None else None,
                            "unit": p.unit, "weight": p.weight, "exclusive": p.exclusive})
                       for p in kb.properties.values()],
        "relations": [opt({"id": r.id, "domain": r.domain, "holds": r.holds.source,
                           "inverse": r.inverse, "symmetric": r.symmetric, "base": r.base,
                           "vague": r.vague, "weight": r.weight})
                      for r in kb.relations.values()],
        "rules": [opt({"id": r.id, "kind": r.kind, "rule": str_rule(r),
                       "if": r.guard.source if r.guard else None,
                       "scenarios": sorted(r.scenarios) if r.scenarios else None})
                  for r in kb.rules if not r.generated],
        "entities": [{"id": e.id, "domain": e.domain, "names": dict(e.names),
                      "properties": dict(e.properties)} for e in kb.entities.values()],
        "scenarios": [opt({
            "id": s.id, "domain": s.domain, "cyclic": s.cyclic, "cycle_attr": s.cycle_attr,
            "constraint": s.constraint.source if s.constraint else None,
            "relations": list(s.relation_vocab),
            "descriptor_properties": list(s.descriptor_properties),
            "intro": dict(s.intro_templates),
            "slots": [opt({"id": sl.id, "attrs": dict(sl.attrs),
                           "constraint": sl.constraint.source if sl.constraint else None})
                      for sl in s.slots],
            "regions": [{"id": r.id, "where": r.where.source} for r in s.regions],
        }) for s in kb.scenarios.values()],
    }


def str_rule(rule: Rule) -> str:
    return str(rule)


# -- validation --------------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.subject}: {self.message}"


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def codes(self) -> set[str]:
        return {f.code for f in self.findings}


def passes(constraints: Iterable[Expr], entity: Entity) -> bool:
    env = entity.env()
    return all(c(env) for c in constraints)


def candidate_entities(kb: KnowledgeBase, scenario: Scenario | str) -> list[Entity]:
    """Entities meeting the scenario-wide constraint and at least one slot constraint."""
    if isinstance(scenario, str):
        scenario = kb.scenario(scenario)
    elif kb.scenarios.get(scenario.id) is not scenario:
        raise UnknownScenario(scenario.id)
    out = []
    for ent in kb.entities.values():
        if scenario.constraint is not None and not scenario.constraint(ent.env()):
            continue
        if any(s.constraint is None or s.constraint(ent.env()) for s in scenario.slots):
            out.append(ent)
    return out


def slot_matching(scenario: Scenario, entities: list[Entity]) -> Optional[dict[str, str]]:
    """A slot->entity matching respecting slot constraints, or None (Kuhn's algorithm)."""
    cons = scenario.slot_constraints
    ok = {s: [e.id for e in entities if passes(cons[s], e)] for s in scenario.slot_ids}
    owner: dict[str, str] = {}

    def augment(slot: str, seen: set[str]) -> bool:
        for eid in ok[slot]:
            if eid in seen:
                continue
            seen.add(eid)
            if eid not in owner or augment(owner[eid], seen):
                owner[eid] = slot
                return True
        return False

    for s in scenario.slot_ids:
        if not augment(s, set()):
            return None
    return {slot: eid for eid, slot in owner.items()}


def validate(kb: KnowledgeBase) -> ValidationReport:
    report = ValidationReport()
    add = lambda code, subject, msg: report.findings.append(Finding(code, subject, msg))  # noqa: E731

    for p in kb.properties.values():
        if not math.isfinite(p.weight) or p.weight < 0:
            add("bad weight", f"property {p.id}", f"weight {p.weight} must be finite and >= 0")
        if p.type == "enum" and not p.values:
            add("property type", f"property {p.id}", "enum property declares no values")
    for r in kb.relations.values():
        if not math.isfinite(r.weight) or r.weight < 0:
            add("bad weight", f"relation {r.id}", f"weight {r.weight} must be finite and >= 0")
        if r.inverse is not None and kb.relations[r.inverse].inverse not in (None, r.id):
            add("inverse mismatch", f"relation {r.id}",
                f"inverse {r.inverse} names {kb.relations[r.inverse].inverse} as its inverse")
        known = {"a", "b"}
        if rogue := set(r.holds.names) - known:
            add("unknown name", f"relation {r.id}", f"holds uses bare names {sorted(rogue)}")

    for e in kb.entities.values():
        for loc in kb.locales:
            if not e.names.get(loc):
                add("missing name", f"entity {e.id}", f"no name for locale {loc}")
        for pid, value in e.properties.items():
            if not kb.properties[pid].accepts(value):
                add("property type", f"entity {e.id}", f"{pid}={value!r} does not match the declared type")

    for rule in kb.rules:
        if fresh := rule.fresh_placeholders():
            add("fresh placeholder", f"rule {rule.id}", f"placeholders {sorted(fresh)} not bound by premises")
        for problem in rule.shape_problems():
            add("rule shape", f"rule {rule.id}", problem)

    prop_ids = set(kb.properties) | {"id"}
    for sc in kb.scenarios.values():
        subject = f"scenario {sc.id}"
        if len(sc.slots) < 2:
            add("slot count", subject, "a scenario needs at least 2 slots")
        if not sc.relation_vocab:
            add("empty relation vocabulary", subject, "relation vocabulary is empty")
        for exprs in sc.slot_constraints.values():
            for c in exprs:
                if rogue := set(c.names) - prop_ids:
                    add("unknown property", subject, f"constraint {c.source!r} references {sorted(rogue)}")
        layout = sc.layout_attrs()
        for r in sc.regions:
            if rogue := set(r.where.names) - layout:
                add("unknown attribute", subject, f"region {r.id} references {sorted(rogue)}")
        if sc.cyclic:
            vals = [s.attrs.get(sc.cycle_attr) for s in sc.slots] if sc.cycle_attr else []
            if sorted(v for v in vals if isinstance(v, int)) != list(range(len(sc.slots))):
                add("cycle", subject, "cyclic scenarios need a cycle_attr numbering slots 0..k-1")
        elif sc.cycle_attr:
            add("cycle", subject, "cycle_attr given on a non-cyclic scenario")
        cands = candidate_entities(kb, sc)
        if len(cands) < len(sc.slots) or slot_matching(sc, cands) is None:
            add("unsatisfiable scenario", subject,
                f"{len(cands)} candidate entities cannot fill {len(sc.slots)} slots")
    return report
