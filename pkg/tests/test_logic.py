import pytest
from hypothesis import given, strategies as st

from score_forge.expr import Expr, ExprError
from score_forge.logic import (Pattern, PatternError, Rule, descriptor, format_form, instantiate,
                               match, occupant, parse_form, parse_value, term_kind)

ids = st.from_regex(r"[a-z][a-z_]{0,8}", fullmatch=True).filter(lambda s: s not in ("true", "false"))
values = st.one_of(st.booleans(), st.integers(-50, 50), ids)


# -- expressions ---------------------------------------------------------------

def test_expr_attribute_access():
    e = Expr("a.tier == b.tier and a.col + 1 == b.col")
    assert e({"a": {"tier": 1, "col": 1}, "b": {"tier": 1, "col": 2}})
    assert not e({"a": {"tier": 1, "col": 2}, "b": {"tier": 1, "col": 2}})
    assert e.attrs == {"a": {"tier", "col"}, "b": {"tier", "col"}}


def test_expr_missing_attribute_is_false():
    assert not Expr("a.legs + 2 == b.legs")({"a": {}, "b": {"legs": 2}})


@pytest.mark.parametrize("src", ["__import__('os')", "(lambda: 1)()", "a[0]", "x if y else z", "open('f')"])
def test_expr_rejects_unsafe_syntax(src):
    with pytest.raises(ExprError):
        Expr(src)


def test_expr_calls():
    assert Expr("abs(V - W) == 2")({"V": 4, "W": 2})
    assert Expr("max(V, W) == 4")({"V": 4, "W": 2})


# -- values and forms ------------------------------------------------------------

@given(values)
def test_value_round_trip(v):
    from score_forge.logic import fmt_value
    assert parse_value(fmt_value(v)) == v
    assert type(parse_value(fmt_value(v))) is type(v)


@given(st.sampled_from(["at", "in"]), ids, ids, st.booleans())
def test_form_round_trip_placement(pred, a, b, truth):
    form = (pred, a, b)
    assert parse_form(format_form(form, truth)) == (form, truth)


@given(ids, ids, values, st.booleans())
def test_form_round_trip_prop(term, prop, value, truth):
    form = ("prop", term, prop, value)
    assert parse_form(format_form(form, truth)) == (form, truth)


@given(ids, ids, ids)
def test_form_round_trip_rel(r, a, b):
    form = ("rel", r, a, b)
    assert parse_form(format_form(form)) == (form, True)


def test_term_kinds():
    assert term_kind("strawberry") == "entity"
    assert term_kind(occupant("no3")) == "occupant"
    assert term_kind(descriptor("color", "red")) == "descriptor"
    assert descriptor("swim", True) == "swim:true"


def test_bad_forms():
    with pytest.raises(PatternError):
        parse_form("rel(left_of, a)")
    with pytest.raises(PatternError):
        parse_form("flies(a)")


# -- patterns and rules ------------------------------------------------------------

def test_pattern_match_binds_and_checks():
    p = Pattern.parse("rel(R, X, Y)")
    env = match(p, ("rel", "left_of", "a", "b"), True, {})
    assert env == {"R": "left_of", "X": "a", "Y": "b"}
    assert match(p, ("rel", "left_of", "a", "b"), False, {}) is None
    assert match(p, ("rel", "left_of", "a", "b"), True, {"X": "c"}) is None


def test_entity_placeholder_refuses_descriptors():
    p = Pattern.parse("at(X, S)")
    assert match(p, ("at", "color:red", "top"), True, {}) is None
    q = Pattern.parse("at(D, S)")
    assert match(q, ("at", "color:red", "top"), True, {}) == {"D": "color:red", "S": "top"}


def test_descriptor_and_occupant_patterns():
    p = Pattern.parse("at(color:V, S)")
    assert match(p, ("at", "color:red", "middle"), True, {}) == {"V": "red", "S": "middle"}
    o = Pattern.parse("prop(#S, legs, V)")
    env = match(o, ("prop", "#no3", "legs", 4), True, {})
    assert env == {"S": "no3", "V": 4}
    assert instantiate(o, env) == ("prop", "#no3", "legs", 4)


def test_negated_pattern():
    p = Pattern.parse("~prop(X, color, V)")
    assert not p.truth
    assert match(p, ("prop", "a", "color", "red"), False, {}) == {"X": "a", "V": "red"}


def test_rule_parse_and_fresh_placeholders():
    r = Rule.parse("r1", "rel(left_of, X, Y) & rel(left_of, Y, Z) => rel(far_left_of, X, Z)", "composition")
    assert r.fresh_placeholders() == set()
    assert r.shape_problems() == []
    bad = Rule.parse("r2", "prop(X, legs, V) => rel(same, X, Y)", "equivalence")
    assert bad.fresh_placeholders() == {"Y"}


def test_rule_guard():
    r = Rule.parse("g", "prop(X, legs, V) & prop(Y, legs, W) => rel(fewer, X, Y)", "join", guard="W - V == 2")
    assert r.guard({"V": 2, "W": 4})
    assert not r.guard({"V": 2, "W": 2})


def test_rule_shape_problems():
    assert Rule.parse("e", "at(X, S) & at(Y, S) => rel(r, X, Y)", "equivalence").shape_problems()
    assert Rule.parse("c", "at(X, S) & rel(r, X, Y) => rel(q, X, Y)", "composition").shape_problems()
