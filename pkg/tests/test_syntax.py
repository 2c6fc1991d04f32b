import pytest
from hypothesis import given, settings

from conftest import formulas
from dtds.corpus import corpus, hohfeld_formulas
from dtds.syntax import (
    TOP, And, Atom, Box, Next, Not, Ought, ParseError, Stit, StitAgt, Until, Always,
    Eventually, Implies, closure, dot_neg, modal_reach, parse, render, size, subformulas,
)

p, q = Atom("p"), Atom("q")


def test_basic_parses():
    assert parse("p & ~p") == And(p, Not(p))
    assert parse("U(q, O1 [1] p)") == Until(q, Ought(1, Stit(1, p)))
    power = parse("dia [1] X (O1 [1] p1 & O2 [2] p2)")
    assert power == Not(Box(Not(Stit(1, Next(And(Ought(1, Stit(1, Atom("p1"))), Ought(2, Stit(2, Atom("p2")))))))))


def test_sugar_is_never_stored():
    assert parse("F p") == Until(p, TOP)
    assert parse("G p") == Not(Until(Not(p), TOP))
    assert parse("M1 p") == Not(Ought(1, Not(p)))
    assert parse("<*> p") == Not(StitAgt(Not(p)))
    assert parse("p | q") == Not(And(Not(p), Not(q)))


def test_precedence_and_associativity():
    assert parse("p -> q -> p") == Implies(p, Implies(q, p))
    assert parse("~p & q") == And(Not(p), q)
    assert parse("box p & q") == And(Box(p), q)
    assert parse("p & q | p") == parse("(p & q) | p")


def test_render_modes():
    assert render(p) == "p"
    assert render(Eventually(p)) == "U(p, true)"
    assert render(Eventually(p), abbreviate=True) == "F p"
    assert render(Always(p), abbreviate=True) == "G p"


@pytest.mark.parametrize("text,pos", [("p &", 3), ("(p", 2), ("p $ q", 2), ("[0] p", 1)])
def test_parse_errors_carry_positions(text, pos):
    with pytest.raises(ParseError) as e:
        parse(text)
    assert e.value.position == pos


def test_agent_out_of_range():
    with pytest.raises(ParseError):
        parse("[3] p", agent_count=2)
    assert parse("[2] p", agent_count=2) == Stit(2, p)


def test_closure_examples():
    assert set(closure(p)) == {p, Not(p)}
    cl = closure(Until(p, q))
    assert {Until(p, q), Next(Until(p, q)), p, q} <= set(cl)
    assert Not(Next(Until(p, q))) in cl
    cl = closure(Ought(1, p))
    assert Stit(1, p) in cl and Not(Stit(1, p)) in cl


def test_hohfeld_corpus_present():
    h = hohfeld_formulas()
    assert set(h) == {"claim", "privilege", "power", "persistent-duty", "conditional-power"}
    assert len(corpus()) >= 50


@settings(max_examples=300, deadline=None)
@given(formulas())
def test_round_trip(f):
    assert parse(render(f)) == f
    assert parse(render(f, abbreviate=True)) == f


@settings(max_examples=200, deadline=None)
@given(formulas())
def test_closure_is_filtration_ready(f):
    cl = closure(f)
    members = set(cl)
    assert f in members
    for g in members:
        assert subformulas(g) <= members
        assert dot_neg(g) in members
        if isinstance(g, Until):
            assert Next(g) in members
        if isinstance(g, Ought):
            assert Stit(g.agent, g.sub) in members
    assert len(cl) <= 4 * size(f)


@settings(max_examples=200, deadline=None)
@given(formulas())
def test_dot_negation_involution(f):
    if not isinstance(f, Not):
        assert dot_neg(dot_neg(f)) == f


@settings(max_examples=100, deadline=None)
@given(formulas())
def test_closure_idempotent(f):
    cl = set(closure(f))
    for g in cl:
        assert set(closure(g)) <= cl


def test_modal_reach():
    assert modal_reach(parse("X X p")) is None
    assert modal_reach(parse("X box p")) == 1
    assert modal_reach(parse("[1] X X p")) == 0
    assert modal_reach(parse("F box p")) == float("inf")
