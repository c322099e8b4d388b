"""Hand-built micro puzzles whose answers are known in advance."""

from score_forge.logic import parse_form
from score_forge.solver import AssignmentSpace, answer_set, consistent_assignments

ZOO_ANIMALS = ["carp", "duck", "turkey", "fox"]
ZOO_STATEMENTS = ["rel(legs_fewer_4, #no3, #no4)", "prop(#no2, swim, true)"]

BOOTH_PEOPLE = ["david", "jennifer", "john", "james"]
BOOTH_STATEMENTS = ["rel(right_of, david, jennifer)", "rel(right_of, john, james)"]
BOOTH_ANCHOR = "in(david, window_bench)"


def space_for(kb, sid, entity_ids, statements):
    return AssignmentSpace(kb, kb.scenario(sid), [kb.entities[e] for e in entity_ids],
                           [parse_form(s) for s in statements])


def zoo_case(kb):
    """(models, precise answer of at(?, no1))."""
    space = space_for(kb, "zoo", ZOO_ANIMALS, ZOO_STATEMENTS)
    return consistent_assignments(space), answer_set(space, parse_form("at(?, no1)")[0])


def booth_case(kb, anchored):
    """(models, answer of rel(diagonal, john, ?)), vague when not anchored."""
    stmts = BOOTH_STATEMENTS + ([BOOTH_ANCHOR] if anchored else [])
    space = space_for(kb, "booth", BOOTH_PEOPLE, stmts)
    mode = "precise" if anchored else "vague"
    return consistent_assignments(space), answer_set(space, parse_form("rel(diagonal, john, ?)")[0], mode)


def zoo_question(kb):
    """The zoo puzzle as a Precise question with options A-D = carp, duck, turkey, fox."""
    from score_forge.generator import Option, PuzzleInstance, Question
    from score_forge.reasoner import from_axioms

    sc = kb.scenario("zoo")
    assignment = {"no1": "turkey", "no2": "duck", "no3": "carp", "no4": "fox"}
    fb = from_axioms(kb, sc, assignment, [parse_form(s) for s in ZOO_STATEMENTS])
    puzzle = PuzzleInstance(kb, sc, assignment, [kb.entities[e] for e in ZOO_ANIMALS],
                            fact_base=fb, statements=list(fb))
    options = [Option(k, "entity", e) for k, e in zip("ABCD", ZOO_ANIMALS)]
    return Question(id="zoo-fixture", puzzle=puzzle, qtype="Precise", options=options, answer=["C"],
                    goal_ids=[], query=parse_form("at(?, no1)")[0])
