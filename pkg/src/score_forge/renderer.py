"""Template-based surface realisation of facts, contexts, questions and prompts.

Templates live in one YAML document per locale (``data/seed/templates``).
Holes use ``str.format`` syntax and are named after the pattern arguments:
``at`` has {X} {S}, ``in`` has {X} {G}, ``prop`` has {X} {V} and ``rel`` has
{X} {Y}.
"""

from __future__ import annotations

import functools
import re
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Union

import yaml

from .errors import MissingHoleBinding, MissingTemplate
from .kb import KnowledgeBase, Scenario
from .logic import fmt_value, split_descriptor, term_kind

HOLES = {
    "at": {"X", "S"},
    "in": {"X", "G"},
    "prop": {"X", "V"},
    "rel": {"X", "Y"},
    "intro": {"names"},
    "occupant": {"S"},
    "stem": {"statement"},
}
PROMPT_HOLES = {"text", "question", "choice_text"}
QUERY_HOLE = "?"


@dataclass(frozen=True)
class TemplateTable:
    locale: str
    data: Mapping

    def lookup(self, *path: Any) -> Any:
        node: Any = self.data
        for key in path:
            if not isinstance(node, Mapping):
                raise MissingTemplate(f"{self.locale}: no template at {'/'.join(map(str, path))}")
            node = _get(node, key)
            if node is None:
                raise MissingTemplate(f"{self.locale}: no template at {'/'.join(map(str, path))}")
        return node

    def has(self, *path: Any) -> bool:
        try:
            self.lookup(*path)
        except MissingTemplate:
            return False
        return True


def _get(node: Mapping, key: Any) -> Any:
    # YAML turns true/false keys into booleans; compare on the formatted value
    if key in node and not isinstance(key, bool):
        return node[key]
    want = fmt_value(key)
    for k, v in node.items():
        if fmt_value(k) == want:
            return v
    return None


def table_from_dict(d: Mapping) -> TemplateTable:
    if "locale" not in d:
        raise MissingTemplate("template document has no locale")
    return TemplateTable(d["locale"], d)


def templates_dir() -> Path:
    return Path(__file__).parent / "data" / "seed" / "templates"


def load_templates(path: Union[str, Path, None] = None) -> dict[str, TemplateTable]:
    """Load every ``<locale>.yaml`` in a directory (or a single file)."""
    path = Path(path) if path is not None else templates_dir()
    files = sorted(path.glob("*.yaml")) if path.is_dir() else [path]
    tables = {}
    for f in files:
        with open(f, encoding="utf-8") as fh:
            t = table_from_dict(yaml.safe_load(fh) or {})
        tables[t.locale] = t
    return tables


@functools.lru_cache(maxsize=1)
def default_templates() -> dict[str, TemplateTable]:
    return load_templates()


def holes(template: str) -> set[str]:
    return {name for _, name, _, _ in string.Formatter().parse(template) if name is not None}


def fill(template: str, bindings: Mapping[str, str]) -> str:
    missing = holes(template) - set(bindings)
    if missing:
        raise MissingHoleBinding(f"unbound holes {sorted(missing)} in {template!r}")
    return template.format_map(bindings)


# -- facts ---------------------------------------------------------------------

def render_term(term: str, table: TemplateTable, kb: KnowledgeBase, scenario: Scenario) -> str:
    if term == QUERY_HOLE:
        return table.lookup("blank")
    kind = term_kind(term)
    if kind == "occupant":
        slot = table.lookup("scenarios", scenario.id, "slots", term[1:])
        return fill(table.lookup("scenarios", scenario.id, "occupant"), {"S": slot})
    if kind == "descriptor":
        prop, raw = split_descriptor(term)
        return table.lookup("descriptors", prop, raw)
    entity = kb.entities.get(term)
    if entity is None or table.locale not in entity.names:
        raise MissingTemplate(f"{table.locale}: no name for {term!r}")
    return entity.names[table.locale]


def _value_text(table: TemplateTable, prop: str, value: Any) -> str:
    if table.has("values", prop, value):
        return str(table.lookup("values", prop, value))
    return fmt_value(value)


def render_fact(fact: Any, locale: str, table: TemplateTable, kb: KnowledgeBase,
                scenario: Union[Scenario, str]) -> str:
    """Render a fact (a reasoner Fact, or a ``(form, truth)`` pair) as a clause.

    The result carries no sentence punctuation or capitalisation.
    """
    if table.locale != locale:
        raise MissingTemplate(f"table is for {table.locale!r}, not {locale!r}")
    sc = kb.scenario(scenario) if isinstance(scenario, str) else scenario
    if hasattr(fact, "form"):
        form, truth = fact.form, fact.truth
    else:
        form, truth = fact
    pred = form[0]
    if pred == "rel":
        _, rid, a, b = form
        if not truth:
            raise MissingTemplate(f"{locale}: no negated template for relation {rid}")
        return fill(table.lookup("relations", rid),
                    {"X": render_term(a, table, kb, sc), "Y": render_term(b, table, kb, sc)})
    if pred in ("at", "in"):
        if not truth:
            raise MissingTemplate(f"{locale}: no negated template for {pred}")
        where = table.lookup("scenarios", sc.id, "slots" if pred == "at" else "regions", form[2])
        hole = "S" if pred == "at" else "G"
        return fill(table.lookup("scenarios", sc.id, pred),
                    {"X": render_term(form[1], table, kb, sc), hole: where})
    if pred == "prop":
        _, term, prop, value = form
        node = table.lookup("properties" if truth else "negated", prop)
        if isinstance(node, Mapping):
            node = _get(node, value)
            if node is None:
                raise MissingTemplate(f"{locale}: no template for {prop}={fmt_value(value)}")
        return fill(node, {"X": render_term(term, table, kb, sc), "V": _value_text(table, prop, value)})
    raise MissingTemplate(f"no template for predicate {pred!r}")


def sentence(clause: str, table: TemplateTable) -> str:
    if table.data.get("capitalize") and clause:
        clause = clause[0].upper() + clause[1:]
    return clause + table.data.get("sentence_end", "")


def join_list(items: list[str], table: TemplateTable) -> str:
    if len(items) < 2:
        return "".join(items)
    return table.data.get("list_sep", ", ").join(items[:-1]) + table.data.get("list_last", " and ") + items[-1]


# -- questions -----------------------------------------------------------------

def render_intro(scenario: Scenario, names: list[str], table: TemplateTable) -> str:
    template = scenario.intro_templates.get(table.locale) or table.lookup("scenarios", scenario.id, "intro")
    return fill(template, {"names": join_list(names, table)})


def render_context(puzzle: Any, table: TemplateTable) -> str:
    """Intro paragraph followed by the puzzle statements, one sentence each."""
    kb, sc = puzzle.kb, puzzle.scenario
    names = [render_term(e, table, kb, sc) for e in puzzle.entity_ids]
    parts = [render_intro(sc, names, table)]
    parts += [sentence(render_fact(f, table.locale, table, kb, sc), table) for f in puzzle.statements]
    return table.data.get("sentence_join", " ").join(parts)


def render_question(question: Any, table: TemplateTable) -> tuple[str, list[tuple[str, str]]]:
    """Stem and keyed option texts for a generated question."""
    p = question.puzzle
    kb, sc = p.kb, p.scenario
    stem = table.lookup("stems", question.qtype)
    if question.query is not None:
        clause = render_fact((question.query, True), table.locale, table, kb, sc)
        stem = fill(stem, {"statement": sentence(clause, table)})
    else:
        stem = fill(stem, {})
    options = []
    for o in question.options:
        if o.kind == "entity":
            text = render_term(o.value, table, kb, sc)
        elif o.kind == "statement":
            text = sentence(render_fact(o.value, table.locale, table, kb, sc), table)
        else:
            text = table.lookup("none_option")
        options.append((o.key, text))
    return stem, options


def format_prompt(context: str, stem: str, options: Iterable[tuple[str, str]], table: TemplateTable) -> str:
    line = table.lookup("option_line")
    choice_text = "\n".join(fill(line, {"key": k, "text": t}) for k, t in options)
    return fill(table.lookup("prompt"), {"text": context, "question": stem, "choice_text": choice_text})


def render_prompt(question: Any, locale: str, table: TemplateTable) -> str:
    """Evaluation prompt for a Question object or an emitted record."""
    if table.locale != locale:
        raise MissingTemplate(f"table is for {table.locale!r}, not {locale!r}")
    if isinstance(question, Mapping):
        opts = [(o["key"], o["text"]) for o in question["options"]]
        return format_prompt(question["context_text"], question["question_text"], opts, table)
    stem, opts = render_question(question, table)
    return format_prompt(render_context(question.puzzle, table), stem, opts, table)


_OPTION_LINE = re.compile(r"^([A-D])\. (.*)$")
_OPTIONS_HEAD = ("Options:", "选项：")


def parse_prompt_options(prompt: str) -> list[tuple[str, str]]:
    """Recover (key, text) pairs from a rendered prompt, line by line."""
    lines = prompt.split("\n")
    start = next((i for i, l in enumerate(lines) if l in _OPTIONS_HEAD), None)
    if start is None:
        return []
    out = []
    for line in lines[start + 1:]:
        m = _OPTION_LINE.match(line)
        if not m:
            break
        out.append((m.group(1), m.group(2)))
    return out


# -- coverage ------------------------------------------------------------------

def _check_holes(problems: list, where: str, template: Any, allowed: set) -> None:
    if not isinstance(template, str):
        problems.append(f"{where}: not a string")
        return
    extra = holes(template) - allowed
    if extra:
        problems.append(f"{where}: unknown holes {sorted(extra)}")


def check_templates(kb: KnowledgeBase, tables: Mapping[str, TemplateTable],
                    locales: Optional[Iterable[str]] = None) -> list[str]:
    """Coverage and hole-name problems; an empty list means every fact renders."""
    from .generator import QTYPES

    problems: list[str] = []
    for loc in locales or kb.locales:
        if loc not in tables:
            problems.append(f"{loc}: no template table")
            continue
        t = tables[loc]
        for key in ("blank", "option_line", "none_option", "prompt"):
            if not t.has(key):
                problems.append(f"{loc}: missing {key}")
        if t.has("prompt"):
            _check_holes(problems, f"{loc}: prompt", t.lookup("prompt"), PROMPT_HOLES)
        for qt in QTYPES:
            if not t.has("stems", qt):
                problems.append(f"{loc}: missing stem {qt}")
            else:
                _check_holes(problems, f"{loc}: stem {qt}", t.lookup("stems", qt), HOLES["stem"])
        rels, props = set(), set()
        for sc in kb.scenarios.values():
            base = ("scenarios", sc.id)
            if not (sc.intro_templates.get(loc) or t.has(*base, "intro")):
                problems.append(f"{loc}: missing intro for {sc.id}")
            elif t.has(*base, "intro"):
                _check_holes(problems, f"{loc}: {sc.id} intro", t.lookup(*base, "intro"), HOLES["intro"])
            for key in ("at", "occupant") + (("in",) if sc.regions else ()):
                if not t.has(*base, key):
                    problems.append(f"{loc}: missing {key} template for {sc.id}")
                else:
                    _check_holes(problems, f"{loc}: {sc.id} {key}", t.lookup(*base, key), HOLES[key])
            problems += [f"{loc}: missing slot label {sc.id}/{s}" for s in sc.slot_ids
                         if not t.has(*base, "slots", s)]
            problems += [f"{loc}: missing region label {sc.id}/{r.id}" for r in sc.regions
                         if not t.has(*base, "regions", r.id)]
            for prop in sc.descriptor_properties:
                for v in kb.properties[prop].values or ():
                    if not t.has("descriptors", prop, v):
                        problems.append(f"{loc}: missing descriptor {prop}={v}")
            rels |= set(sc.relation_vocab)
        for e in kb.entities.values():
            props |= set(e.properties)
            if loc not in e.names:
                problems.append(f"{loc}: missing name for {e.id}")
        for rid in sorted(rels):
            if not t.has("relations", rid):
                problems.append(f"{loc}: missing relation template {rid}")
            else:
                _check_holes(problems, f"{loc}: relation {rid}", t.lookup("relations", rid), HOLES["rel"])
        for pid in sorted(props):
            p = kb.properties[pid]
            sections = ["properties"] + (["negated"] if p.exclusive else [])
            if p.type == "bool":
                values = [True, False]
            else:
                values = list(p.values or ()) or sorted(
                    {e.properties[pid] for e in kb.entities.values() if pid in e.properties})
            for section in sections:
                if not t.has(section, pid):
                    problems.append(f"{loc}: missing {section} template for {pid}")
                    continue
                node = t.lookup(section, pid)
                for v in values:
                    tpl = _get(node, v) if isinstance(node, Mapping) else node
                    if tpl is None:
                        problems.append(f"{loc}: missing {section} template for {pid}={fmt_value(v)}")
                    else:
                        _check_holes(problems, f"{loc}: {section} {pid}", tpl, HOLES["prop"])
    return problems
