"""Puzzle and question generation.

One question is produced by a sequential pipeline: instantiate a scenario,
close its fact base, pick statements until the solver reports a unique
placement, prune them, design a question of the requested type and score its
difficulty.  If any stage fails, or the reasoning chain falls outside the
requested hop range, the whole pipeline is retried with fresh randomness.
"""

from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .config import default_thresholds
from .difficulty import DifficultyFeatures, bucket, fit_thresholds, level
from .errors import (ConstraintViolation, DegenerateOptions, MissingTemplate, NotUnique,
                     RetryBudgetExhausted, SinkError, UnsatisfiableScenario)
from .kb import (Entity, KnowledgeBase, Scenario, candidate_entities, dump_kb, load_kb, passes,
                 slot_matching)
from .logic import form_terms, format_form, parse_form, split_descriptor, term_kind
from .reasoner import Fact, FactBase, Labels, chain_steps, close_instance, own_labels, provenance
from .renderer import (TemplateTable, default_templates, render_context, render_fact,
                       render_question, table_from_dict)
from .seeds import rng_for
from .solver import HOLE, AssignmentSpace, answer_set, completions, prune_to_minimal

QTYPES = ("CorrectStatement", "IncorrectStatement", "Precise", "Vague")
KEYS = "ABCD"
NONE_KEY = "D"
DEFAULT_HOPS = (2, 11)
DEFAULT_RETRIES = 50


@dataclass
class PuzzleInstance:
    kb: KnowledgeBase
    scenario: Scenario
    assignment: dict[str, str]
    entities: list[Entity]
    seed: tuple = ()
    fact_base: Optional[FactBase] = None
    space: Optional[AssignmentSpace] = None
    statements: list[Fact] = field(default_factory=list)
    chain_length: int = 0
    statement_depth: int = 0
    _informative: Optional[list] = field(default=None, repr=False)

    @property
    def truth_row(self) -> int:
        return self.space.row_of(self.assignment)

    @property
    def entity_ids(self) -> list[str]:
        return [e.id for e in self.entities]

    def named_entities(self) -> set[str]:
        out = set()
        for f in self.statements:
            out.update(t for t in form_terms(f.form) if term_kind(t) == "entity")
        return out


@dataclass
class Option:
    key: str
    kind: str  # entity | statement | none
    value: Any = None  # entity id, or (form, truth)
    source: Optional[int] = None  # fact id of the true fact behind a statement option


@dataclass
class Question:
    id: str
    puzzle: PuzzleInstance
    qtype: str
    options: list[Option]
    answer: list[str]
    goal_ids: list[int]
    query: Optional[tuple] = None
    chain_length: int = 0
    chain: list[tuple[str, int]] = field(default_factory=list)
    labels: dict = field(default_factory=dict)
    features: Optional[DifficultyFeatures] = None
    score: float = 0.0
    bucket: str = ""

    @property
    def domain(self) -> str:
        return self.puzzle.scenario.domain


# -- step 1: instantiate ---------------------------------------------------------

def instantiate(kb: KnowledgeBase, scenario_id: str, rng: np.random.Generator,
                seed: tuple = ()) -> PuzzleInstance:
    """Sample entities for the slots and a uniformly random legal placement."""
    sc = kb.scenario(scenario_id)
    k = len(sc.slots)
    cands = candidate_entities(kb, sc)
    if len(cands) < k or slot_matching(sc, cands) is None:
        raise UnsatisfiableScenario(f"{sc.id}: {len(cands)} candidates cannot fill {k} slots")
    cons = sc.slot_constraints
    for _ in range(1000):
        chosen = [cands[i] for i in rng.choice(len(cands), size=k, replace=False)]
        if slot_matching(sc, chosen) is None:
            continue
        for _ in range(100000):
            perm = rng.permutation(k)
            placement = {s: chosen[perm[j]] for j, s in enumerate(sc.slot_ids)}
            if all(passes(cons[s], e) for s, e in placement.items()):
                return PuzzleInstance(kb, sc, {s: e.id for s, e in placement.items()}, chosen, seed)
    raise UnsatisfiableScenario(f"{sc.id}: no legal placement found by sampling")


def ground(puzzle: PuzzleInstance) -> PuzzleInstance:
    """Close the fact base and build the solver space (in place)."""
    puzzle.fact_base = close_instance(puzzle.kb, puzzle.scenario, puzzle.assignment, puzzle.entities)
    puzzle.space = AssignmentSpace(puzzle.kb, puzzle.scenario, puzzle.entities)
    return puzzle


# -- step 2: statements ------------------------------------------------------------

def informative_facts(puzzle: PuzzleInstance) -> list[Fact]:
    """Facts that constrain the placement (true in some but not all assignments)."""
    if puzzle._informative is not None:
        return puzzle._informative
    space = puzzle.space
    vocab = set(puzzle.scenario.relation_vocab)
    out = []
    for f in puzzle.fact_base:
        if f.pred == "rel" and f.form[1] not in vocab:
            continue
        if not space.mask(f).all():
            out.append(f)
    puzzle._informative = out
    return out


def _depth_weights(depths: Sequence[int], target_hops: Optional[int]) -> np.ndarray:
    """Sampling weight of each depth level.

    Without a target, shallow statements are preferred so that chains stay in
    the default hop range.  With a target, levels near a depth that usually
    yields about that many rule applications are preferred.
    """
    d = np.asarray(depths, dtype=float)
    if target_hops is None:
        return np.exp(-d)
    centre = max(0.0, (target_hops - 2) / 3.0)
    return np.exp(-2.0 * np.abs(d - centre))


def select_statements(puzzle: PuzzleInstance, rng: np.random.Generator,
                      target_hops: Optional[int] = None, prune: bool = True) -> list[Fact]:
    """Add random informative facts until the placement is unique, then prune."""
    fb, space = puzzle.fact_base, puzzle.space
    by_depth: dict[int, list[Fact]] = {}
    for f in informative_facts(puzzle):
        by_depth.setdefault(f.depth, []).append(f)
    chosen: list[Fact] = []
    alive = np.ones(space.size, dtype=bool)
    count = space.size
    while count > 1:
        levels = sorted(d for d, fs in by_depth.items() if fs)
        if not levels:
            raise DegenerateOptions("fact base cannot pin down the placement")
        w = _depth_weights(levels, target_hops)
        depth = levels[rng.choice(len(levels), p=w / w.sum())]
        bucket_ = by_depth[depth]
        fact = bucket_.pop(int(rng.integers(len(bucket_))))
        narrowed = alive & space.mask(fact)
        n = int(narrowed.sum())
        if n < count:
            chosen.append(fact)
            alive, count = narrowed, n
    if prune:
        chosen = prune_to_minimal(space.with_statements(chosen))
    puzzle.statements = chosen
    ids = [f.id for f in chosen]
    puzzle.chain_length = len(provenance(fb, ids))
    puzzle.statement_depth = max((f.depth for f in chosen), default=0)
    return chosen


# -- step 3: questions ---------------------------------------------------------------

def _option_slots(puzzle: PuzzleInstance) -> int:
    return 4 if len(puzzle.scenario.slots) == 4 else 3


def _entity_query_candidates(puzzle: PuzzleInstance) -> list[tuple[Fact, int]]:
    stated = {f.key for f in puzzle.statements}
    out = []
    for f in informative_facts(puzzle):
        if f.key in stated or not f.truth:
            continue
        positions = (2, 3) if f.pred == "rel" else (1,)
        for pos in positions:
            if term_kind(f.form[pos]) == "entity":
                out.append((f, pos))
    return out


def _answers_at_truth(puzzle: PuzzleInstance, query: tuple) -> tuple[list[str], list[int]] | None:
    """Fillers true in the ground-truth placement, with their fact ids.

    Returns None if some true filler is missing from the fact base (its chain
    could not be reported).
    """
    space, row = puzzle.space, puzzle.truth_row
    answers, goals = [], []
    for filler, form in completions(space, query):
        if space.mask((form, True))[row]:
            fact = puzzle.fact_base.get(form)
            if fact is None:
                return None
            answers.append(filler)
            goals.append(fact.id)
    return answers, goals


def _entity_options(puzzle: PuzzleInstance, answers: list[str], rng) -> tuple[list[Option], list[str]]:
    ids = puzzle.entity_ids
    if _option_slots(puzzle) == 4:
        picked = [ids[i] for i in rng.permutation(len(ids))]
        options = [Option(KEYS[i], "entity", e) for i, e in enumerate(picked)]
    else:
        picked = [ids[i] for i in rng.choice(len(ids), size=3, replace=False)]
        options = [Option(KEYS[i], "entity", e) for i, e in enumerate(picked)]
        options.append(Option(NONE_KEY, "none"))
    key = [o.key for o in options if o.kind == "entity" and o.value in answers]
    return options, key or [NONE_KEY]


def _query_question(puzzle: PuzzleInstance, qtype: str, rng) -> tuple:
    cands = _entity_query_candidates(puzzle)
    for i in rng.permutation(len(cands)):
        fact, pos = cands[i]
        query = tuple(HOLE if j == pos else x for j, x in enumerate(fact.form))
        found = _answers_at_truth(puzzle, query)
        if found is None:
            continue
        answers, goals = found
        if (qtype == "Precise") != (len(answers) == 1) or not answers:
            continue
        options, key = _entity_options(puzzle, answers, rng)
        return query, options, key, goals
    raise DegenerateOptions(f"no {qtype} query fits this instance")


def _value_steps(kb: KnowledgeBase, prop: str, value: Any) -> list[Any]:
    p = kb.properties[prop]
    if p.type == "bool":
        return [not value]
    if p.type == "enum":
        return [v for v in (p.values or ()) if v != value]
    seen = sorted({e.properties[prop] for e in kb.entities.values() if prop in e.properties})
    i = seen.index(value) if value in seen else -1
    return [seen[j] for j in (i - 1, i + 1) if 0 <= j < len(seen) and i >= 0]


def perturbations(puzzle: PuzzleInstance, form: tuple) -> list[tuple]:
    """Single-edit variants: swap the two terms, change the relation, the slot,
    the region, the value, or one entity."""
    sc, kb = puzzle.scenario, puzzle.kb
    pred = form[0]
    out = []

    def swap_entity(i):
        if term_kind(form[i]) == "entity":
            for e in puzzle.entity_ids:
                if e not in form:
                    out.append(form[:i] + (e,) + form[i + 1:])

    if pred == "rel":
        _, rid, a, b = form
        out.append(("rel", rid, b, a))
        out.extend(("rel", r, a, b) for r in sc.relation_vocab if r != rid)
        swap_entity(2)
        swap_entity(3)
    elif pred == "at":
        out.extend(("at", form[1], s) for s in sc.slot_ids if s != form[2])
        swap_entity(1)
    elif pred == "in":
        out.extend(("in", form[1], r.id) for r in sc.regions if r.id != form[2])
        swap_entity(1)
    else:
        _, term, prop, value = form
        out.extend(("prop", term, prop, v) for v in _value_steps(kb, prop, value))
        if term_kind(term) == "occupant":
            out.extend(("prop", "#" + s, prop, value) for s in sc.slot_ids if "#" + s != term)
    return out


def _statement_question(puzzle: PuzzleInstance, qtype: str, rng, target_hops: Optional[int] = None) -> tuple:
    space, row = puzzle.space, puzzle.truth_row
    stated = {f.key for f in puzzle.statements}
    pool = [f for f in informative_facts(puzzle) if f.truth and f.key not in stated]
    if target_hops is not None:
        # option sources whose derivations alone overshoot the target are useless
        fb = puzzle.fact_base
        base = provenance(fb, [f.id for f in puzzle.statements])
        pool = [f for f in pool if len(base | provenance(fb, [f.id])) <= target_hops]
    n = _option_slots(puzzle)
    if len(pool) < n:
        raise DegenerateOptions("too few facts to build statement options")
    n_true = int(rng.integers(1, 4)) if n == 4 else int(rng.integers(0, 4))
    order = [pool[i] for i in rng.permutation(len(pool))]
    trues = order[:n_true]
    used = {f.form for f in trues}
    falses: list[tuple[tuple, int]] = []
    for src in order[n_true:]:
        if len(falses) == n - n_true:
            break
        edits = [e for e in perturbations(puzzle, src.form) if e not in used]
        good = []
        for e in edits:
            try:
                m = space.mask((e, True))
            except Exception:  # edits can leave the scenario vocabulary
                continue
            if not m[row] and m.any():
                good.append(e)
        if good:
            lie = good[int(rng.integers(len(good)))]
            used.add(lie)
            falses.append((lie, src.id))
    if len(falses) < n - n_true:
        raise DegenerateOptions("could not falsify enough statements")
    items = [((f.form, True), f.id, True) for f in trues] + [((e, True), sid, False) for e, sid in falses]
    items = [items[i] for i in rng.permutation(len(items))]
    options = [Option(KEYS[i], "statement", st, src) for i, (st, src, _) in enumerate(items)]
    want = qtype == "CorrectStatement"
    key = [KEYS[i] for i, (_, _, t) in enumerate(items) if t == want]
    if n == 3:
        options.append(Option(NONE_KEY, "none"))
        key = key or [NONE_KEY]
    goals = [src for _, src, _ in items]
    return None, options, key, goals


def make_question(puzzle: PuzzleInstance, qtype: str, rng, qid: str = "",
                  target_hops: Optional[int] = None) -> Question:
    if qtype not in QTYPES:
        raise ValueError(f"unknown question type {qtype!r}")
    if qtype in ("Precise", "Vague"):
        query, options, key, goals = _query_question(puzzle, qtype, rng)
    else:
        query, options, key, goals = _statement_question(puzzle, qtype, rng, target_hops)
    fb = puzzle.fact_base
    ids = [f.id for f in puzzle.statements] + list(goals)
    q = Question(id=qid, puzzle=puzzle, qtype=qtype, options=options, answer=sorted(key),
                 goal_ids=list(goals), query=query)
    q.chain = chain_steps(fb, ids)
    q.chain_length = len(q.chain)
    q.labels = question_labels(q)
    return q


def _question_forms(q: Question) -> list[tuple]:
    forms = []
    if q.query is not None:
        forms.append(tuple(x for x in q.query if x != HOLE))
    forms.extend(o.value[0] for o in q.options if o.kind == "statement")
    return forms


def question_labels(q: Question) -> dict:
    p = q.puzzle
    fb = p.fact_base
    labels = Labels(domains=frozenset([p.scenario.domain]))
    for fid in [f.id for f in p.statements] + q.goal_ids:
        labels = labels | fb.facts[fid].labels | own_labels(p.kb, p.scenario, fb.facts[fid].form)
    for form in _question_forms(q):
        if form[0] == "rel" and len(form) == 3:
            continue
        labels = labels | _partial_labels(p, form)
    d = labels.as_dict()
    d["domains"] = sorted(set(d["domains"]) - {"mix"} | {p.scenario.domain})
    d["scenarios"] = [p.scenario.id]
    d["chain_length"] = q.chain_length
    d["question_type"] = q.qtype
    return d


def _partial_labels(p: PuzzleInstance, form: tuple) -> Labels:
    if len(form) == {"at": 3, "in": 3, "prop": 4, "rel": 4}[form[0]]:
        return own_labels(p.kb, p.scenario, form)
    # a query with its hole removed: label the remaining constituents
    ents = frozenset(t for t in form[1:] if isinstance(t, str) and t in p.kb.entities)
    rels = frozenset(t for t in form[1:2] if form[0] == "rel")
    return Labels(entities=ents, relations=rels)


# -- difficulty ----------------------------------------------------------------

def _fact_weight(kb: KnowledgeBase, form: tuple) -> float:
    weights = [0.0]
    if form[0] == "rel" and form[1] in kb.relations:
        weights.append(kb.relations[form[1]].weight)
    if form[0] == "prop":
        weights.append(kb.properties[form[2]].weight)
    for t in form_terms(form):
        if term_kind(t) == "descriptor":
            weights.append(kb.properties[split_descriptor(t)[0]].weight)
    return max(weights)


def extract_features(q: Question) -> DifficultyFeatures:
    p = q.puzzle
    kb, fb = p.kb, p.fact_base
    domain = p.scenario.domain
    named = p.named_entities()
    statement_forms = [f.form for f in p.statements]
    goal_forms = [fb.facts[i].form for i in q.goal_ids]
    q_forms = _question_forms(q)

    def entities_of(forms):
        return {t for f in forms for t in form_terms(f) if t in kb.entities} if forms else set()

    question_entities = {t for f in q_forms for t in f[1:] if isinstance(t, str) and t in kb.entities}
    answer_entities = {o.value for o in q.options if o.kind == "entity" and o.key in q.answer}
    answer_entities |= entities_of([o.value[0] for o in q.options
                                    if o.kind == "statement" and o.key in q.answer])
    props = set()
    for fid in [f.id for f in p.statements] + q.goal_ids:
        props |= fb.facts[fid].labels.properties | own_labels(kb, p.scenario, fb.facts[fid].form).properties
    kl = float(sum(kb.properties[x].weight for x in props if x in kb.properties))
    implicit_q = int(bool(question_entities - named))
    implicit_a = int(bool(answer_entities - named))
    cl = q.chain_length
    if domain == "space":
        return DifficultyFeatures(nm=len(named), pr=int(len(entities_of(goal_forms)) > 2),
                                  al=int(bool(set(p.entity_ids) - named)))
    if domain == "time":
        ws = [_fact_weight(kb, f) for f in statement_forms] or [0.0]
        # the core question is the fact(s) the answer hinges on
        dq = max([_fact_weight(kb, f) for f in goal_forms] or [0.0])
        return DifficultyFeatures(lc=cl, cg=max(ws), na=len(q.answer), dk=float(np.mean(ws)),
                                  dq=dq, dc=0.5 if p.scenario.cyclic else 0.0)
    if domain == "social":
        return DifficultyFeatures(cl=cl, nm=int(bool((question_entities | answer_entities) - named)),
                                  ne=sum(1 for f in statement_forms if f[0] == "rel"))
    if domain == "nature":
        return DifficultyFeatures(kl=kl, cl=cl, nm=int(bool((question_entities | answer_entities) - named)))
    vague = any(f[0] == "rel" and kb.relations[f[1]].vague for f in statement_forms + q_forms
                if len(f) == 4 and f[1] in kb.relations)
    return DifficultyFeatures(level_nature=kl, level_space=int(vague), nm_q=implicit_q, nm_a=implicit_a)


def score_difficulty(q: Question, thresholds: Mapping) -> Question:
    """Fill features and score; the bucket stays empty if the domain has no thresholds."""
    q.features = extract_features(q)
    q.score = round(level(q.domain, q.features), 9)
    q.bucket = bucket(q.score, thresholds[q.domain]) if q.domain in thresholds else ""
    return q


# -- pipeline ------------------------------------------------------------------

@dataclass
class GenerationConfig:
    seed: int = 0
    scenarios: Optional[Sequence[str]] = None
    qtypes: Sequence[str] = QTYPES
    hops: tuple[int, int] = DEFAULT_HOPS
    target_hops: Optional[int] = None
    retries: int = DEFAULT_RETRIES
    designs: int = 8
    prune: bool = True
    thresholds: dict = field(default_factory=default_thresholds)


def plan(kb: KnowledgeBase, config: GenerationConfig, index: int) -> tuple[str, str]:
    """Scenario and question type for question ``index``."""
    rng = rng_for(config.seed, index)
    scenarios = list(config.scenarios or kb.scenarios)
    sid = scenarios[int(rng.integers(len(scenarios)))]
    qtype = config.qtypes[int(rng.integers(len(config.qtypes)))]
    return sid, qtype


def generate_question(kb: KnowledgeBase, config: GenerationConfig, index: int,
                      scenario_id: Optional[str] = None, qtype: Optional[str] = None) -> Question:
    planned = plan(kb, config, index)
    sid = scenario_id or planned[0]
    qtype = qtype or planned[1]
    lo, hi = config.hops
    for attempt in range(config.retries):
        rng = rng_for(config.seed, index, attempt + 1)
        seed = (config.seed, index, attempt + 1)
        puzzle = ground(instantiate(kb, sid, rng, seed))
        try:
            select_statements(puzzle, rng, config.target_hops, config.prune)
        except DegenerateOptions:
            continue
        # several question designs share one puzzle before it is discarded
        for _ in range(config.designs):
            try:
                q = make_question(puzzle, qtype, rng, qid=f"{sid}-{config.seed}-{index:06d}",
                                  target_hops=config.target_hops)
            except DegenerateOptions:
                break
            if config.target_hops is not None:
                if q.chain_length != config.target_hops:
                    continue
            elif not lo <= q.chain_length <= hi:
                continue
            return score_difficulty(q, config.thresholds)
    want = config.target_hops if config.target_hops is not None else f"{lo}..{hi}"
    raise RetryBudgetExhausted(f"{sid}/{qtype}: no question with {want} hops in {config.retries} attempts")


def generate_corpus(kb: KnowledgeBase, config: GenerationConfig, count: int,
                    start: int = 0) -> list[Question]:
    return [generate_question(kb, config, i) for i in range(start, start + count)]


def calibrate(kb: KnowledgeBase, config: GenerationConfig, count: int,
              targets: Sequence[float] = (1 / 6, 1 / 2)) -> dict[str, list[float]]:
    """Per-domain thresholds fitted on a pilot run so buckets land near ``targets``."""
    scores: dict[str, list[float]] = {}
    for q in generate_corpus(kb, config, count):
        scores.setdefault(q.domain, []).append(q.score)
    return {d: fit_thresholds(s, targets) for d, s in sorted(scores.items())}


# -- records -------------------------------------------------------------------

def _option_value(o: Option) -> Any:
    if o.kind == "statement":
        return format_form(*o.value)
    return o.value


def puzzle_record(q: Question) -> dict:
    """Structured copy of the puzzle, enough for the solver to replay the answer."""
    p = q.puzzle
    return {
        "assignment": {s: p.assignment[s] for s in p.scenario.slot_ids},
        "entities": p.entity_ids,
        "statements": [format_form(f.form, f.truth) for f in p.statements],
        "query": format_form(q.query) if q.query is not None else None,
        "options": [{"key": o.key, "kind": o.kind, "value": _option_value(o)} for o in q.options],
        "statement_depth": p.statement_depth,
        "instance_seed": list(p.seed),
    }


def question_record(q: Question, locale: str, tables: Optional[Mapping[str, TemplateTable]] = None) -> dict:
    tables = tables or default_templates()
    if locale not in tables:
        raise MissingTemplate(f"no template table for locale {locale!r}")
    table = tables[locale]
    p = q.puzzle
    kb, sc, fb = p.kb, p.scenario, p.fact_base
    stem, options = render_question(q, table)
    steps = []
    for rule, fid in q.chain:
        f = fb.facts[fid]
        steps.append({
            "fact": format_form(f.form, f.truth),
            "text": render_fact(f, locale, table, kb, sc),
            "rule": rule,
            "depth": f.depth,
            "premises": [format_form(fb.facts[i].form, fb.facts[i].truth) for i in f.premises],
        })
    return {
        "id": f"{q.id}-{locale}",
        "question_id": q.id,
        "seed": p.seed[0] if p.seed else None,
        "locale": locale,
        "domain": q.domain,
        "scenario": sc.id,
        "context_text": render_context(p, table),
        "question_text": stem,
        "options": [{"key": k, "text": t} for k, t in options],
        "answer": list(q.answer),
        "labels": q.labels,
        "difficulty": {
            "features": q.features.as_dict() if q.features else {},
            "score": q.score,
            "bucket": q.bucket,
        },
        "chain": {"length": q.chain_length, "steps": steps},
        "puzzle": puzzle_record(q),
    }


def dumps_record(record: Mapping) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def _file_mode(path: Path) -> int:
    """Mode for a replaced file: keep the old one, else what open() would give."""
    try:
        return path.stat().st_mode & 0o777
    except OSError:
        mask = os.umask(0)
        os.umask(mask)
        return 0o666 & ~mask


def write_atomic(path: Union[str, Path], text: str) -> None:
    """Write through a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    tmp = None
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
        os.chmod(tmp, _file_mode(path))
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        if tmp and os.path.exists(tmp):
            os.unlink(tmp)
        raise SinkError(f"cannot write {path}: {exc}") from exc


def emit_dataset(items: Iterable, sink: Any, locales: Sequence[str] = ("en",),
                 tables: Optional[Mapping[str, TemplateTable]] = None) -> int:
    """Write questions (one record per locale) or ready records as JSON lines.

    ``sink`` is a path, written atomically, or an open text stream.  Returns
    the number of records written.
    """
    records: list[Mapping] = []
    for item in items:
        if isinstance(item, Mapping):
            records.append(item)
        else:
            records.extend(question_record(item, loc, tables) for loc in locales)
    text = "".join(dumps_record(r) + "\n" for r in records)
    if isinstance(sink, (str, Path)):
        write_atomic(sink, text)
    else:
        try:
            sink.write(text)
        except (OSError, ValueError) as exc:
            raise SinkError(f"cannot write records: {exc}") from exc
    return len(records)


def read_records(path: Union[str, Path]) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# -- parallel generation ---------------------------------------------------------

_WORKER: dict = {}


def _init_worker(kb_doc: dict, config: GenerationConfig, locales: Sequence[str],
                 template_docs: Optional[dict]) -> None:
    _WORKER["kb"] = load_kb(kb_doc)
    _WORKER["config"] = config
    _WORKER["locales"] = tuple(locales)
    _WORKER["tables"] = ({k: table_from_dict(v) for k, v in template_docs.items()}
                         if template_docs else None)


def _records_for(index: int) -> list[dict]:
    q = generate_question(_WORKER["kb"], _WORKER["config"], index)
    return [question_record(q, loc, _WORKER["tables"]) for loc in _WORKER["locales"]]


def generate_records(kb: KnowledgeBase, config: GenerationConfig, count: int,
                     locales: Sequence[str] = ("en",), workers: int = 1,
                     tables: Optional[Mapping[str, TemplateTable]] = None) -> list[dict]:
    """Records for questions ``0..count-1`` in index order.

    Every question draws its randomness from (seed, index, attempt), so the
    output does not depend on the number of workers.
    """
    template_docs = {k: dict(v.data) for k, v in tables.items()} if tables else None
    if workers <= 1 or count < 2:
        _init_worker(dump_kb(kb), config, locales, template_docs)
        try:
            return [r for i in range(count) for r in _records_for(i)]
        finally:
            _WORKER.clear()
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(dump_kb(kb), config, locales, template_docs)) as pool:
        chunks = pool.map(_records_for, range(count), chunksize=max(1, count // (workers * 8)))
        return [r for chunk in chunks for r in chunk]


# -- replay --------------------------------------------------------------------

def replay_space(kb: KnowledgeBase, record: Mapping) -> AssignmentSpace:
    pz = record["puzzle"]
    sc = kb.scenario(record["scenario"])
    entities = [kb.entities[e] for e in pz["entities"]]
    return AssignmentSpace(kb, sc, entities, [parse_form(t) for t in pz["statements"]])


def replay_answer(kb: KnowledgeBase, record: Mapping) -> list[str]:
    """Recompute a record's answer key from its statements with the solver."""
    space = replay_space(kb, record)
    mask = space.consistent_mask()
    n = int(mask.sum())
    if n != 1:
        raise NotUnique(f"{record.get('id')}: {n} placements satisfy the statements")
    row = int(np.flatnonzero(mask)[0])
    pz = record["puzzle"]
    qtype = record["labels"]["question_type"]
    options = pz["options"]
    if qtype in ("Precise", "Vague"):
        satisfying = answer_set(space, parse_form(pz["query"])[0], "precise")
        if qtype == "Precise" and len(satisfying) != 1:
            raise NotUnique(f"{record.get('id')}: precise query has {len(satisfying)} answers")
        keys = [o["key"] for o in options if o["kind"] == "entity" and o["value"] in satisfying]
    else:
        want = qtype == "CorrectStatement"
        keys = [o["key"] for o in options
                if o["kind"] == "statement" and bool(space.mask(parse_form(o["value"]))[row]) == want]
    if not keys and any(o["kind"] == "none" for o in options):
        keys = [NONE_KEY]
    return sorted(keys)


def option_rule_ok(kb: KnowledgeBase, record: Mapping) -> bool:
    """4-slot scenarios: four real options; otherwise A-C plus "None of the above" as D."""
    options = record["puzzle"]["options"]
    keys = [o["key"] for o in options]
    if keys != list(KEYS):
        return False
    kinds = [o["kind"] for o in options]
    if len(kb.scenario(record["scenario"]).slots) == 4:
        return "none" not in kinds
    return kinds[3] == "none" and "none" not in kinds[:3]


def verify_record(kb: KnowledgeBase, record: Mapping) -> None:
    """Raise if the record's answer, placement or option layout does not replay."""
    space = replay_space(kb, record)
    rows = np.flatnonzero(space.consistent_mask())
    if len(rows) != 1:
        raise NotUnique(f"{record['id']}: {len(rows)} placements satisfy the statements")
    if space.assignment(int(rows[0])) != record["puzzle"]["assignment"]:
        raise ConstraintViolation(f"{record['id']}: solver placement differs from the recorded one")
    if not option_rule_ok(kb, record):
        raise ConstraintViolation(f"{record['id']}: options break the option rule")
    got = replay_answer(kb, record)
    if got != sorted(record["answer"]):
        raise ConstraintViolation(f"{record['id']}: replayed answer {got} != recorded {record['answer']}")
