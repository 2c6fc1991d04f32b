import dataclasses
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import formulas
from dtds.decide import find_countermodel
from dtds.proofkit import (
    BUNDLED_UNTIL_SCRIPT, SCHEMA_IDS, Justification, Meta, PremiseError, ProofFormatError, ProofLine,
    ProofScript, check, derive_extra_rule, is_tautology, match_axiom, matches_schema, parse_proof,
    prove_tautology, prove_via_next, schema, substitute,
)
from dtds.syntax import (
    And, Atom, Box, Iff, Implies, Next, Not, Or, Ought, Stit, StitAgt, Until, parse, walk,
)

p, q = Atom("p"), Atom("q")


def test_match_examples():
    ufix = Iff(Until(p, q), Or(p, And(q, Next(Until(p, q)))))
    assert match_axiom(ufix, 1).schema == "UFix"
    m = match_axiom(parse("O2 p -> O2 [2] p", 2), 2)
    assert (m.schema, m.agent) == ("A7", 2)
    assert match_axiom(parse("p | ~p"), 1).schema == "PC"
    assert match_axiom(parse("O1 p -> O2 [2] p", 2), 2) is None
    assert match_axiom(parse("[2] p -> p", 2), 1) is None  # agent out of range
    assert match_axiom(parse("[1] p & [2] q -> [*] (p & q)", 2), 2).schema == "A3"
    assert match_axiom(parse("dia [1] p & dia [2] q -> dia ([1] p & [2] q)", 2), 2).schema == "A2"


def test_tautology_treats_modal_parts_as_opaque():
    assert is_tautology(parse("X p | ~X p"))
    assert not is_tautology(parse("X p | X ~p"))
    assert is_tautology(parse("(box p -> q) -> (~q -> ~box p)"))


def metas(f):
    return sorted({g.name for g in walk(f) if isinstance(g, Meta)})


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([s for s in SCHEMA_IDS if s != "PC"]), st.data())
def test_instances_match(sid, data):
    agents = 2
    pat = schema(sid, agents)
    sub = {name: data.draw(formulas(max_leaves=3)) for name in metas(pat)}
    agent = data.draw(st.integers(1, agents))
    f = substitute(pat, sub, agent)
    assert matches_schema(f, sid, agents)
    m = match_axiom(f, agents)
    assert m is not None
    if m.schema != "PC":
        assert m.instantiate(agents) == f


def test_bundled_until_script():
    script = parse_proof(BUNDLED_UNTIL_SCRIPT)
    assert len(script.lines) == 3
    assert check(script, 1, goal=parse("U(p, q) -> p | q")).ok


def test_proof_format_errors():
    with pytest.raises(ProofFormatError):
        parse_proof("1. p | ~p ; Axiom\n")
    with pytest.raises(ProofFormatError):
        parse_proof("1 p | ~p ; Axiom PC\n")
    res = check(parse_proof("2. p | ~p ; Axiom PC\n1. p | ~p ; Axiom PC\n"), 1)
    assert not res.ok and res.line == 1


def t_stit_premise():
    text = """
    # [1] ~p & X(~p & ~q) -> ~p through the T axiom for [1]
    1. [1] ~p -> ~p ; Axiom T-stit
    2. ([1] ~p -> ~p) -> ([1] ~p & X (~p & ~q) -> ~p) ; Axiom PC
    3. [1] ~p & X (~p & ~q) -> ~p ; MP 1, 2
    """
    return parse_proof(text, 1)


def instances():
    """(phi, alpha, beta, first premise, second premise, agents)."""
    out = []
    phi = parse("p & ~p")
    esc = Or(phi, And(Not(p), Not(q)))
    out.append((phi, p, q, prove_tautology(Implies(phi, Not(p))), prove_tautology(Implies(phi, Next(esc))), 1))

    inner = And(Not(p), Not(q))
    phi = And(Not(p), Next(inner))
    out.append((phi, p, q, prove_tautology(Implies(phi, Not(p))),
                prove_via_next(phi, inner, Or(phi, inner)), 1))

    a, b = parse("[1] q", 2), parse("O1 p", 2)
    inner = And(Not(a), Not(b))
    phi = And(And(b, Not(a)), Next(inner))
    out.append((phi, a, b, prove_tautology(Implies(phi, Not(a))), prove_via_next(phi, inner, Or(phi, inner)), 2))

    phi = parse("r & ~r")
    alpha = Not(phi)
    esc = Or(phi, And(Not(alpha), Not(q)))
    out.append((phi, alpha, q, prove_tautology(Implies(phi, Not(alpha))),
                prove_tautology(Implies(phi, Next(esc))), 1))

    inner = And(Not(p), Not(q))
    phi = parse("[1] ~p & X (~p & ~q)", 1)
    out.append((phi, p, q, t_stit_premise(), prove_via_next(phi, inner, Or(phi, inner)), 1))
    return out


@pytest.mark.parametrize("k", range(5))
def test_derived_rule(k):
    phi, alpha, beta, pr1, pr2, agents = instances()[k]
    script = derive_extra_rule(phi, alpha, beta, pr1, pr2, agents)
    goal = Implies(phi, Not(Until(alpha, beta)))
    assert check(script, agents, goal=goal).ok
    assert check(parse_proof(str(script), agents), agents, goal=goal).ok


def test_derived_conclusion_has_no_small_countermodel():
    phi, alpha, beta, pr1, pr2, agents = instances()[1]
    script = derive_extra_rule(phi, alpha, beta, pr1, pr2, agents)
    assert not find_countermodel(script.conclusion, 2, 1).is_sat


def test_bad_premises():
    phi, alpha, beta, pr1, pr2, agents = instances()[1]
    with pytest.raises(PremiseError):
        derive_extra_rule(phi, alpha, beta, pr2, pr1, agents)
    broken = ProofScript([ProofLine(1, Implies(phi, Not(alpha)), Justification("Axiom", schema="A1"))])
    with pytest.raises(PremiseError):
        derive_extra_rule(phi, alpha, beta, broken, pr2, agents)


# mutation testing ------------------------------------------------------------------

def mutate_formula(f, rng):
    nodes = list(walk(f))
    target = rng.randrange(len(nodes))
    counter = [0]

    def rebuild(g):
        here = counter[0]
        counter[0] += 1
        if here == target:
            return change(g)
        if isinstance(g, (And, Until)):
            return type(g)(rebuild(g.children()[0]), rebuild(g.children()[1]))
        if isinstance(g, (Stit, Ought)):
            return type(g)(g.agent, rebuild(g.sub))
        if g.children():
            return type(g)(rebuild(g.sub))
        return g

    def change(g):
        if isinstance(g, Atom):
            return Atom(rng.choice([x for x in "pqrs" if x != g.name]))
        if isinstance(g, Not) and rng.random() < 0.5:
            return g.sub
        if isinstance(g, And) and g.left != g.right and rng.random() < 0.5:
            return And(g.right, g.left)
        if isinstance(g, Until) and g.left != g.right and rng.random() < 0.5:
            return Until(g.right, g.left)
        if isinstance(g, (Stit, Ought)) and rng.random() < 0.5:
            return Ought(g.agent, g.sub) if isinstance(g, Stit) else Stit(g.agent, g.sub)
        if isinstance(g, (Box, StitAgt, Next)) and rng.random() < 0.5:
            return rng.choice([c for c in (Box, StitAgt, Next) if not isinstance(g, c)])(g.sub)
        return Not(g)

    # walk() visits nodes in the same pre-order as rebuild()
    return rebuild(f)


def mutate(script, rng):
    lines = list(script.lines)
    k = rng.randrange(len(lines))
    line = lines[k]
    why = line.why
    kind = rng.choice(["formula", "formula", "refs", "schema", "swap"])
    if kind == "refs" and why.refs:
        refs = list(why.refs)
        j = rng.randrange(len(refs))
        refs[j] = max(1, refs[j] + rng.choice([-3, -2, -1, 1, 2]))
        why = dataclasses.replace(why, refs=tuple(refs))
    elif kind == "schema" and why.kind == "Axiom":
        why = dataclasses.replace(why, schema=rng.choice([s for s in SCHEMA_IDS if s != why.schema]))
    elif kind == "schema" and why.kind == "Nec":
        why = dataclasses.replace(why, modality=rng.choice([m for m in ("box", "[*]", "X", "[1]", "O1")
                                                             if m != why.modality]))
    elif kind == "swap":
        other = rng.randrange(len(lines))
        if lines[other].formula != line.formula:
            lines[other] = dataclasses.replace(lines[other], formula=line.formula)
            lines[k] = dataclasses.replace(line, formula=script.lines[other].formula)
            return ProofScript(lines)
        return mutate(script, rng)
    else:
        lines[k] = dataclasses.replace(line, formula=mutate_formula(line.formula, rng))
        return ProofScript(lines)
    lines[k] = dataclasses.replace(line, why=why)
    return ProofScript(lines)


def mutation_run(n=500, seed=0):
    rng = random.Random(seed)
    derived = []
    for phi, alpha, beta, pr1, pr2, agents in instances():
        s = derive_extra_rule(phi, alpha, beta, pr1, pr2, agents)
        derived.append((s, agents))
    rejected = 0
    wrong_goal = 0
    for i in range(n):
        script, agents = derived[i % len(derived)]
        mutant = mutate(script, rng)
        if mutant.lines == script.lines:
            mutant = mutate(script, rng)
        if check(mutant, agents).ok:
            if mutant.conclusion != script.conclusion:
                wrong_goal += 1
        else:
            rejected += 1
    return rejected, wrong_goal


def test_mutants_are_rejected():
    rejected, wrong_goal = mutation_run()
    assert rejected >= 495
    assert wrong_goal == 0
