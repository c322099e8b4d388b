"""Fact forms, terms and rule patterns.

A fact form is a plain tuple ``(predicate, *args)``:

    ("at", term, slot)              term occupies slot
    ("in", term, region)            term lies in a named region of the scenario
    ("prop", term, property, value) term has the property value
    ("rel", relation, term, term)   binary relation between two terms

A *term* is an entity id (``"carp"``), a slot-occupant reference
(``"#no3"``, "the animal in enclosure No.3") or a descriptor
(``"legs:2"``, "the animal with 2 legs").

Rule patterns use the same shape with placeholders.  Placeholder letters are
typed so that a rule cannot accidentally bind a descriptor where an entity is
required:

    X Y Z A B C  entity ids            D U     any term
    S T          slot ids              G       region ids
    R Q          relation ids          P       property ids
    V W          property values

A letter may carry a numeric suffix (``X2``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional

from .expr import Expr

PREDICATES = {"at": 2, "in": 2, "prop": 3, "rel": 3}

_PLACEHOLDER = re.compile(r"^([A-Z])([0-9]*)$")
_ATOM = re.compile(r"^(~|not\s+)?\s*([a-z_]+)\s*\((.*)\)\s*$")

ENTITY_VARS = set("XYZABC")
ANY_TERM_VARS = set("DU")
SLOT_VARS = set("ST")
REGION_VARS = set("G")
RELATION_VARS = set("RQ")
PROPERTY_VARS = set("P")
VALUE_VARS = set("VW")
PLACEHOLDER_LETTERS = (ENTITY_VARS | ANY_TERM_VARS | SLOT_VARS | REGION_VARS
                       | RELATION_VARS | PROPERTY_VARS | VALUE_VARS)


class PatternError(ValueError):
    pass


# -- values and terms -------------------------------------------------------

def fmt_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def parse_value(text: str) -> Any:
    text = text.strip()
    if text == "true":
        return True
    if text == "false":
        return False
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    if re.fullmatch(r"-?\d+\.\d+", text):
        return float(text)
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    return text


def descriptor(prop: str, value: Any) -> str:
    return f"{prop}:{fmt_value(value)}"


def occupant(slot: str) -> str:
    return f"#{slot}"


def term_kind(term: str) -> str:
    if term.startswith("#"):
        return "occupant"
    if ":" in term:
        return "descriptor"
    return "entity"


def split_descriptor(term: str) -> tuple[str, str]:
    prop, _, value = term.partition(":")
    return prop, value


def form_terms(form: tuple) -> tuple[str, ...]:
    """Terms (subjects/objects) appearing in a form."""
    pred = form[0]
    if pred == "rel":
        return (form[2], form[3])
    return (form[1],)


def form_entities(form: tuple) -> tuple[str, ...]:
    return tuple(t for t in form_terms(form) if term_kind(t) == "entity")


def format_form(form: tuple, truth: bool = True) -> str:
    body = f"{form[0]}({', '.join(fmt_value(a) for a in form[1:])})"
    return body if truth else "~" + body


def parse_form(text: str) -> tuple[tuple, bool]:
    """Parse ``"rel(left_of, a, b)"`` or ``"~prop(x, legs, 4)"`` into (form, truth)."""
    m = _ATOM.match(text.strip())
    if not m:
        raise PatternError(f"cannot parse fact {text!r}")
    neg, pred, body = m.groups()
    args = [a.strip() for a in body.split(",")] if body.strip() else []
    if pred not in PREDICATES or len(args) != PREDICATES[pred]:
        raise PatternError(f"bad predicate or arity in {text!r}")
    typed: list[Any] = []
    for i, a in enumerate(args):
        typed.append(parse_value(a) if _is_value_position(pred, i) else a)
    return (pred, *typed), not neg


def _is_value_position(pred: str, index: int) -> bool:
    return pred == "prop" and index == 2


# -- patterns ---------------------------------------------------------------

@dataclass(frozen=True)
class Arg:
    """One argument position of a pattern.

    ``kind`` is ``const``, ``var``, ``occupant`` (``#S``) or ``descriptor``
    (``P:V``); compound kinds keep their parts in ``parts``.
    """

    kind: str
    value: Any = None
    parts: tuple["Arg", ...] = ()

    def placeholders(self) -> Iterator[str]:
        if self.kind == "var":
            yield self.value
        for p in self.parts:
            yield from p.placeholders()


def _parse_simple(text: str, value_position: bool) -> Arg:
    if _PLACEHOLDER.match(text):
        if text[0] not in PLACEHOLDER_LETTERS:
            raise PatternError(f"unknown placeholder letter in {text!r}")
        return Arg("var", text)
    return Arg("const", parse_value(text) if value_position else text)


def parse_arg(text: str, value_position: bool = False) -> Arg:
    text = text.strip()
    if not text:
        raise PatternError("empty argument")
    if text.startswith("#"):
        return Arg("occupant", parts=(_parse_simple(text[1:], False),))
    if ":" in text:
        left, _, right = text.partition(":")
        return Arg("descriptor", parts=(_parse_simple(left, False), _parse_simple(right, True)))
    return _parse_simple(text, value_position)


@dataclass(frozen=True)
class Pattern:
    pred: str
    args: tuple[Arg, ...]
    truth: bool = True

    @classmethod
    def parse(cls, text: str) -> "Pattern":
        m = _ATOM.match(text.strip())
        if not m:
            raise PatternError(f"cannot parse pattern {text!r}")
        neg, pred, body = m.groups()
        if pred not in PREDICATES:
            raise PatternError(f"unknown predicate {pred!r} in {text!r}")
        raw = [a for a in body.split(",")]
        if len(raw) != PREDICATES[pred]:
            raise PatternError(f"{pred} takes {PREDICATES[pred]} arguments: {text!r}")
        args = tuple(parse_arg(a, _is_value_position(pred, i)) for i, a in enumerate(raw))
        return cls(pred, args, not neg)

    def placeholders(self) -> set[str]:
        return {v for a in self.args for v in a.placeholders()}

    def relation_constant(self) -> Optional[str]:
        if self.pred == "rel" and self.args[0].kind == "const":
            return self.args[0].value
        return None

    def __str__(self) -> str:
        def show(a: Arg) -> str:
            if a.kind == "occupant":
                return "#" + show(a.parts[0])
            if a.kind == "descriptor":
                return f"{show(a.parts[0])}:{show(a.parts[1])}"
            return fmt_value(a.value)
        body = f"{self.pred}({', '.join(show(a) for a in self.args)})"
        return body if self.truth else "~" + body


def _check_type(var: str, value: Any) -> bool:
    letter = var[0]
    if letter in ENTITY_VARS:
        return isinstance(value, str) and term_kind(value) == "entity"
    if letter in ANY_TERM_VARS:
        return isinstance(value, str)
    return True


def _bind(var: str, value: Any, env: dict) -> bool:
    if var in env:
        return env[var] == value
    if not _check_type(var, value):
        return False
    env[var] = value
    return True


def match_arg(arg: Arg, value: Any, env: dict) -> bool:
    """Match one argument, extending ``env`` in place.  Caller copies env."""
    if arg.kind == "const":
        return arg.value == value
    if arg.kind == "var":
        return _bind(arg.value, value, env)
    if not isinstance(value, str):
        return False
    if arg.kind == "occupant":
        return value.startswith("#") and match_arg(arg.parts[0], value[1:], env)
    if term_kind(value) != "descriptor":
        return False
    prop, raw = split_descriptor(value)
    return match_arg(arg.parts[0], prop, env) and _match_descriptor_value(arg.parts[1], raw, env)


def _match_descriptor_value(arg: Arg, raw: str, env: dict) -> bool:
    if arg.kind == "const":
        return fmt_value(arg.value) == raw
    if arg.value in env:
        return fmt_value(env[arg.value]) == raw
    env[arg.value] = parse_value(raw)
    return True


def match(pattern: Pattern, form: tuple, truth: bool, env: dict) -> Optional[dict]:
    if pattern.pred != form[0] or pattern.truth != truth:
        return None
    out = dict(env)
    for arg, value in zip(pattern.args, form[1:]):
        if not match_arg(arg, value, out):
            return None
    return out


def instantiate_arg(arg: Arg, env: dict) -> Any:
    if arg.kind == "const":
        return arg.value
    if arg.kind == "var":
        return env[arg.value]
    if arg.kind == "occupant":
        return occupant(instantiate_arg(arg.parts[0], env))
    return descriptor(instantiate_arg(arg.parts[0], env), instantiate_arg(arg.parts[1], env))


def instantiate(pattern: Pattern, env: dict) -> tuple:
    return (pattern.pred, *(instantiate_arg(a, env) for a in pattern.args))


# -- rules ------------------------------------------------------------------

RULE_KINDS = ("equivalence", "join", "composition")


@dataclass(frozen=True)
class Rule:
    id: str
    kind: str
    premises: tuple[Pattern, ...]
    conclusion: Pattern
    guard: Optional[Expr] = None
    scenarios: Optional[frozenset[str]] = None
    generated: bool = False
    text: str = field(default="", compare=False)

    @classmethod
    def parse(cls, rule_id: str, text: str, kind: str, guard: Optional[str] = None,
              scenarios=None, generated: bool = False) -> "Rule":
        if "=>" not in text:
            raise PatternError(f"rule {rule_id}: missing '=>' in {text!r}")
        lhs, rhs = text.split("=>", 1)
        if " if " in rhs and guard is None:
            rhs, guard = rhs.split(" if ", 1)
        premises = tuple(Pattern.parse(p) for p in lhs.split("&"))
        return cls(
            id=rule_id,
            kind=kind,
            premises=premises,
            conclusion=Pattern.parse(rhs),
            guard=Expr(guard) if guard else None,
            scenarios=frozenset(scenarios) if scenarios else None,
            generated=generated,
            text=text.strip(),
        )

    def applies_to(self, scenario_id: str) -> bool:
        return self.scenarios is None or scenario_id in self.scenarios

    def fresh_placeholders(self) -> set[str]:
        bound: set[str] = set()
        for p in self.premises:
            bound |= p.placeholders()
        used = set(self.conclusion.placeholders())
        if self.guard is not None:
            used |= {n for n in self.guard.names if _PLACEHOLDER.match(n)}
        return used - bound

    def shape_problems(self) -> list[str]:
        n = len(self.premises)
        if self.kind not in RULE_KINDS:
            return [f"unknown rule kind {self.kind!r}"]
        if self.kind == "equivalence" and n != 1:
            return ["equivalence rules take exactly 1 premise"]
        if self.kind == "join" and n != 2:
            return ["join rules take exactly 2 premises"]
        if self.kind == "composition":
            if n != 2 or any(p.pred != "rel" for p in self.premises):
                return ["composition rules take exactly 2 relation premises"]
            first, second = self.premises
            if first.args[2] != second.args[1] or first.args[2].kind != "var":
                return ["composition premises must share the middle term"]
        return []

    def __str__(self) -> str:
        return " & ".join(map(str, self.premises)) + " => " + str(self.conclusion)
