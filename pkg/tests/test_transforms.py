import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import formulas, super_additive_model, two_state_model
from oracles import PlainModel, choice_property, compose, premodel_eval
from dtds.decide import random_premodel
from dtds.lasso import ExplicitSystem, audit_window, is_strictly_super_additive
from dtds.premodel import InvalidModelError, audit, check_side_conditions
from dtds.syntax import Atom, Until, closure, parse
from dtds.transforms import (
    PMorphismError, build_choice, check_pmorphism, filtrate, filtration_classes, make_acceptable,
    to_additive, transfer_failures, unravel,
)


def test_choice_examples():
    F = build_choice(3, 2)
    assert F((1, 2)) == 0
    G = build_choice(4, 3)
    assert G((2, 2, 1)) == 2
    assert {build_choice(1, k)((0,) * k) for k in (1, 2, 3)} == {0}
    with pytest.raises(ValueError):
        build_choice(2, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(2, 4))
def test_choice_property(x, i):
    F = build_choice(x, i)
    assert choice_property(F.table(), x, i)


def fulfils(m, h, u, t, horizon):
    """Along the lasso from t, the goal of u comes before the hold condition fails."""
    for t2 in range(t, horizon):
        s = h.state_at(t2)
        if m.extension(u.left) >> s & 1:
            return True
        if not m.extension(u.right) >> s & 1:
            return False
    return False


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), formulas(max_leaves=5))
def test_make_acceptable_fulfils_every_until(seed, f):
    m = random_premodel(5, 2, rng=seed)
    sigma = closure(Until(f, Atom("q")), 2)
    for s in m.states:
        h = make_acceptable(m, s, sigma)
        span = len(h.stem) + len(h.loop)
        for u in sigma.untils():
            for t in range(span):
                if m.extension(u) >> h.state_at(t) & 1:
                    assert fulfils(m, h, u, t, t + span + len(h.loop) * len(sigma.untils()) + m.n)


def side_clean_premodel(rng, sigma, n=4, tries=400):
    for _ in range(tries):
        m = random_premodel(n, 2, rng=rng, max_out=1 + rng.randrange(2))
        if not check_side_conditions(m, sigma):
            return m
    raise AssertionError("no premodel met the side conditions")


@pytest.mark.parametrize("text", ["p & X ~q", "U(p, q) & O1 [1] q", "box X p | [*] q", "O2 ~p -> X U(q, ~p)"])
def test_unravel_transfers_truth(text):
    rng = random.Random(text)
    sigma = closure(parse(text, 2), 2)
    for _ in range(5):
        m = side_clean_premodel(rng, sigma)
        sys = unravel(m, sigma, horizon=2)
        assert audit_window(sys, super_additive=True).ok
        assert transfer_failures(sys, sigma) == []


def test_unravel_rejects_invalid_premodel():
    m = two_state_model()
    d = m.to_dict()
    d["ought_1"] = [["a", "a"]]
    with pytest.raises(InvalidModelError):
        unravel(type(m).from_dict(d), closure(Atom("p")))


def test_unravel_covers_each_moment():
    m = super_additive_model()
    sys = unravel(m, closure(parse("p & q", 2), 2), horizon=1)
    for t in range(2):
        for k in range(len(sys)):
            cls = sys.classes("box", t)[k]
            seen = {sys.point(k2, t) for k2 in range(len(sys)) if cls >> k2 & 1}
            assert seen == set(range(m.n))


def plain_filtration(m, sigma):
    pm = PlainModel(m.to_dict())
    prof = {s: frozenset(f for f in sigma if premodel_eval(pm, s, f)) for s in m.states}
    key = {s: (prof[s], frozenset(prof[x] for x in pm.succ(pm.box, s))) for s in m.states}
    return {(a, b) for a in m.states for b in m.states if key[a] == key[b]}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), formulas(max_leaves=4))
def test_filtration(seed, f):
    m = random_premodel(5, 2, rng=seed)
    sigma = closure(f, 2)
    cls = filtration_classes(m, sigma)
    sim = {(a, b) for a in m.states for b in m.states if cls[m.idx(a)] == cls[m.idx(b)]}
    assert sim == plain_filtration(m, sigma)
    box = PlainModel(m.to_dict()).box
    assert compose(sim, box) == compose(box, sim)
    mf = filtrate(m, sigma)
    assert audit(mf).ok
    assert len(mf.states) == len(set(cls))


def test_additive_input_stays_additive():
    m = random_premodel(3, 2, rng=11)
    sys = unravel(m, closure(Atom("p"), 2), horizon=1)
    refined, w = to_additive(sys)
    assert audit_window(refined).ok
    assert set(w.mapping) == set(range(len(sys)))


def test_super_additive_refinement():
    m = super_additive_model()
    sys = unravel(m, closure(parse("p & q", 2), 2), horizon=1)
    assert is_strictly_super_additive(sys)
    assert not audit_window(sys).ok and audit_window(sys, super_additive=True).ok
    refined, w = to_additive(sys, horizon=0)
    assert audit_window(refined).ok
    assert set(w.mapping) == set(range(len(sys)))
    phi = [parse(x, 2) for x in ("[1] p", "[*] q", "<*> p & <2> q", "box (p -> [*] p)", "O1 q", "X [1] p")]
    check_pmorphism(refined, sys, refined.projection(), formulas=phi)


def test_single_agent_super_additive_is_refused():
    frame = {"box": [[0, 1]], "agt": [[0], [1]], "stit": {1: [[0, 1]]}, "ought": {1: [[0, 0], [0, 1], [1, 0], [1, 1]]}}
    sys = ExplicitSystem(2, 1, [frame], horizon=0)
    with pytest.raises(ValueError):
        to_additive(sys)


def test_pmorphism_identity_and_collapse():
    m = super_additive_model()
    sys = unravel(m, closure(Atom("p"), 2), horizon=0)
    w = check_pmorphism(sys, sys, range(len(sys)), formulas=[parse("[1] p | <2> q", 2)])
    assert w.formulas_checked == 1
    with pytest.raises(PMorphismError) as e:
        check_pmorphism(sys, sys, [0] * len(sys))
    assert "back" in str(e.value)
