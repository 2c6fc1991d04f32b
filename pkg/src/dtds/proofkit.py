"""Hilbert-style proof scripts: axiom matching, rule checking, and a derived-rule macro.

Script text format, one line per step::

    1. U(p, q) <-> (p | (q & X U(p, q))) ; Axiom UFix
    2. ... ; Axiom PC
    3. U(p, q) -> (p | q) ; MP 1, 2

Justifications: ``Axiom ID``, ``MP i, j`` (line ``j`` is ``line i -> this``),
``Nec M i`` with ``M`` one of ``box``, ``[*]``, ``X``, ``[k]``, ``Ok``, and
``UInd i[, psi]``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .syntax import (
    And, Atom, Bottom, Box, Formula, Iff, Implies, Next, Not, Or, Ought, ParseError,
    Stit, StitAgt, Top, Until, conj, parse, render, walk,
)


# schemas ---------------------------------------------------------------------------

class Meta(Atom):
    """Metavariable inside a schema; matches any formula."""

    __slots__ = ()


AGENT_VAR = 0  # placeholder agent in schemas, bound to one concrete agent when matching

A, B = Meta("A"), Meta("B")


def _dia(f):
    return Not(Box(Not(f)))


def _s5(tag: str, wrap) -> dict:
    dual = lambda f: Not(wrap(Not(f)))  # noqa: E731
    return {
        f"K-{tag}": Implies(wrap(Implies(A, B)), Implies(wrap(A), wrap(B))),
        f"T-{tag}": Implies(wrap(A), A),
        f"4-{tag}": Implies(wrap(A), wrap(wrap(A))),
        f"5-{tag}": Implies(dual(A), wrap(dual(A))),
    }


def _fixed_schemas() -> dict[str, Formula]:
    s: dict[str, Formula] = {}
    s.update(_s5("box", Box))
    s.update(_s5("stit", lambda f: Stit(AGENT_VAR, f)))
    s.update(_s5("agt", StitAgt))
    s["K-O"] = Implies(Ought(AGENT_VAR, Implies(A, B)), Implies(Ought(AGENT_VAR, A), Ought(AGENT_VAR, B)))
    s["K-X"] = Implies(Next(Implies(A, B)), Implies(Next(A), Next(B)))
    s["A1"] = Implies(Box(A), Stit(AGENT_VAR, A))
    s["A2"] = None  # expanded per agent count
    s["A3"] = None
    s["A4"] = Implies(StitAgt(Next(A)), Next(Box(A)))
    s["A5"] = Implies(Box(A), Ought(AGENT_VAR, A))
    s["A6"] = Implies(Ought(AGENT_VAR, A), Not(Ought(AGENT_VAR, Not(A))))
    s["A7"] = Implies(Ought(AGENT_VAR, A), Ought(AGENT_VAR, Stit(AGENT_VAR, A)))
    s["A8"] = Implies(Ought(AGENT_VAR, A), Box(Ought(AGENT_VAR, A)))
    s["XFunc"] = Iff(Next(A), Not(Next(Not(A))))
    s["UFix"] = Iff(Until(A, B), Or(A, And(B, Next(Until(A, B)))))
    return s


_FIXED = _fixed_schemas()
SCHEMA_IDS = tuple(_FIXED) + ("PC",)


def schema(schema_id: str, agents: int) -> Optional[Formula]:
    """The schema formula, with (A2)/(A3) expanded over agents 1..``agents``."""
    if schema_id == "A2":
        parts = [Meta(f"A{i}") for i in range(1, agents + 1)]
        return Implies(conj(_dia(Stit(i, p)) for i, p in enumerate(parts, 1)),
                       _dia(conj(Stit(i, p) for i, p in enumerate(parts, 1))))
    if schema_id == "A3":
        parts = [Meta(f"A{i}") for i in range(1, agents + 1)]
        return Implies(conj(Stit(i, p) for i, p in enumerate(parts, 1)), StitAgt(conj(parts)))
    if schema_id == "PC":
        return None
    return _FIXED[schema_id]


@dataclass(frozen=True)
class SchemaMatch:
    schema: str
    substitution: dict = field(default_factory=dict)  # metavariable name -> Formula
    agent: Optional[int] = None

    def instantiate(self, agents: int) -> Formula:
        if self.schema == "PC":
            raise ValueError("PC has no schema formula")
        return substitute(schema(self.schema, agents), self.substitution, self.agent)


def substitute(pattern: Formula, sub: dict, agent: Optional[int]) -> Formula:
    if isinstance(pattern, Meta):
        return sub[pattern.name]
    if isinstance(pattern, (Atom, Top, Bottom)):
        return pattern
    if isinstance(pattern, (Stit, Ought)):
        a = agent if pattern.agent == AGENT_VAR else pattern.agent
        return type(pattern)(a, substitute(pattern.sub, sub, agent))
    if isinstance(pattern, (And, Until)):
        return type(pattern)(substitute(pattern.children()[0], sub, agent),
                             substitute(pattern.children()[1], sub, agent))
    return type(pattern)(substitute(pattern.sub, sub, agent))


def _unify(pattern: Formula, f: Formula, sub: dict, bind: list) -> bool:
    if isinstance(pattern, Meta):
        if pattern.name in sub:
            return sub[pattern.name] == f
        sub[pattern.name] = f
        return True
    if type(pattern) is not type(f):
        return False
    if isinstance(pattern, Atom):
        return pattern == f
    if isinstance(pattern, (Top, Bottom)):
        return True
    if isinstance(pattern, (Stit, Ought)):
        if pattern.agent == AGENT_VAR:
            if bind[0] is None:
                bind[0] = f.agent
            elif bind[0] != f.agent:
                return False
        elif pattern.agent != f.agent:
            return False
    return all(_unify(p, g, sub, bind) for p, g in zip(pattern.children(), f.children()))


def is_tautology(f: Formula) -> bool:
    """Truth-table check with every non-Boolean subformula treated as an opaque atom."""
    opaque: dict[Formula, int] = {}

    def collect(g):
        if isinstance(g, Not):
            collect(g.sub)
        elif isinstance(g, And):
            collect(g.left)
            collect(g.right)
        elif not isinstance(g, (Top, Bottom)) and g not in opaque:
            opaque[g] = len(opaque)

    collect(f)
    k = len(opaque)
    if k > 20:
        raise ValueError("too many propositional atoms for a truth table")
    rows = 1 << k
    full = (1 << rows) - 1
    cols = {}
    for g, j in opaque.items():
        # bit r of the column is bit j of r
        block = (1 << (1 << j)) - 1
        pattern = block << (1 << j)
        period = 1 << (j + 1)
        col = 0
        for start in range(0, rows, period):
            col |= pattern << start
        cols[g] = col & full

    def ev(g):
        if isinstance(g, Not):
            return full & ~ev(g.sub)
        if isinstance(g, And):
            return ev(g.left) & ev(g.right)
        if isinstance(g, Top):
            return full
        if isinstance(g, Bottom):
            return 0
        return cols[g]

    return ev(f) == full


def match_axiom(f: Formula, agents: int) -> Optional[SchemaMatch]:
    """First schema (in ``SCHEMA_IDS`` order) that ``f`` instantiates, or None."""
    for sid in SCHEMA_IDS:
        if sid == "PC":
            if is_tautology(f):
                return SchemaMatch("PC")
            continue
        pat = schema(sid, agents)
        sub: dict = {}
        bind = [None]
        if _unify(pat, f, sub, bind):
            if bind[0] is not None and not 1 <= bind[0] <= agents:
                continue
            return SchemaMatch(sid, sub, bind[0])
    return None


def matches_schema(f: Formula, schema_id: str, agents: int) -> bool:
    if schema_id == "PC":
        return is_tautology(f)
    if schema_id not in SCHEMA_IDS:
        return False
    sub: dict = {}
    bind = [None]
    if not _unify(schema(schema_id, agents), f, sub, bind):
        return False
    return bind[0] is None or 1 <= bind[0] <= agents


# scripts ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Justification:
    kind: str  # "Axiom", "MP", "Nec", "UInd"
    refs: tuple[int, ...] = ()
    schema: Optional[str] = None
    modality: Optional[str] = None  # "box", "[*]", "X", "[k]", "Ok"
    psi: Optional[Formula] = None

    def __str__(self):
        if self.kind == "Axiom":
            return f"Axiom {self.schema}"
        if self.kind == "MP":
            return f"MP {self.refs[0]}, {self.refs[1]}"
        if self.kind == "Nec":
            return f"Nec {self.modality} {self.refs[0]}"
        text = f"UInd {self.refs[0]}"
        if self.psi is not None:
            text += f", {render(self.psi)}"
        return text


@dataclass(frozen=True)
class ProofLine:
    number: int
    formula: Formula
    why: Justification

    def __str__(self):
        return f"{self.number}. {render(self.formula, True)} ; {self.why}"


@dataclass
class ProofScript:
    lines: list[ProofLine]

    def __str__(self):
        return "\n".join(str(l) for l in self.lines) + "\n"

    @property
    def conclusion(self) -> Optional[Formula]:
        return self.lines[-1].formula if self.lines else None

    def renumbered(self, offset: int) -> "ProofScript":
        """Shift every line number and reference by ``offset``."""
        out = []
        for l in self.lines:
            w = l.why
            w = Justification(w.kind, tuple(r + offset for r in w.refs), w.schema, w.modality, w.psi)
            out.append(ProofLine(l.number + offset, l.formula, w))
        return ProofScript(out)


class ProofFormatError(ValueError):
    pass


_LINE = re.compile(r"^\s*(\d+)\s*\.\s*(.*?)\s*;\s*([^;]*?)\s*$")
_MODALITY = re.compile(r"^(box|\[\*\]|X|\[(\d+)\]|O\s*(\d+))$")


def parse_justification(text: str, agents: Optional[int] = None) -> Justification:
    text = text.strip()
    word, _, rest = text.partition(" ")
    rest = rest.strip()
    try:
        if word == "Axiom":
            if not rest or " " in rest:
                raise ProofFormatError(f"bad axiom reference {text!r}")
            return Justification("Axiom", schema=rest)
        if word == "MP":
            i, j = (int(x) for x in rest.split(","))
            return Justification("MP", (i, j))
        if word == "Nec":
            mod, _, ref = rest.rpartition(" ")
            mod = mod.strip()
            m = _MODALITY.match(mod)
            if not m:
                raise ProofFormatError(f"unknown modality {mod!r}")
            if m.group(3):
                mod = f"O{int(m.group(3))}"
            elif m.group(2):
                mod = f"[{int(m.group(2))}]"
            return Justification("Nec", (int(ref),), modality=mod)
        if word == "UInd":
            ref, comma, psi = rest.partition(",")
            return Justification("UInd", (int(ref),), psi=parse(psi, agents) if comma else None)
    except (ValueError, ParseError) as e:
        if isinstance(e, ProofFormatError):
            raise
        raise ProofFormatError(f"bad justification {text!r}: {e}") from e
    raise ProofFormatError(f"unknown justification {text!r}")


def parse_proof(text: str, agents: Optional[int] = None) -> ProofScript:
    lines = []
    for raw in text.splitlines():
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        m = _LINE.match(raw)
        if not m:
            raise ProofFormatError(f"cannot read proof line {raw!r}")
        try:
            f = parse(m.group(2), agents)
        except ParseError as e:
            raise ProofFormatError(f"line {m.group(1)}: {e}") from e
        lines.append(ProofLine(int(m.group(1)), f, parse_justification(m.group(3), agents)))
    return ProofScript(lines)


def load_proof(path, agents: Optional[int] = None) -> ProofScript:
    with open(path) as fh:
        return parse_proof(fh.read(), agents)


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    line: Optional[int] = None
    reason: str = ""

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "ok" if self.ok else f"line {self.line}: {self.reason}"


def apply_modality(mod: str, f: Formula) -> Formula:
    if mod == "box":
        return Box(f)
    if mod == "[*]":
        return StitAgt(f)
    if mod == "X":
        return Next(f)
    if mod.startswith("["):
        return Stit(int(mod[1:-1]), f)
    return Ought(int(mod[1:]), f)


def _check_line(line: ProofLine, known: dict[int, Formula], agents: int) -> Optional[str]:
    w = line.why
    for r in w.refs:
        if r not in known:
            return f"reference to line {r} which is not an earlier line"
    cur = line.formula
    if w.kind == "Axiom":
        if w.schema not in SCHEMA_IDS:
            return f"unknown axiom {w.schema}"
        if not matches_schema(cur, w.schema, agents):
            return f"not an instance of {w.schema}"
        return None
    if w.kind == "MP":
        i, j = w.refs
        if known[j] != Implies(known[i], cur):
            return f"line {j} is not (line {i} -> this line)"
        return None
    if w.kind == "Nec":
        mod = w.modality
        if mod.startswith(("[", "O")) and mod != "[*]":
            k = int(mod[1:-1]) if mod.startswith("[") else int(mod[1:])
            if not 1 <= k <= agents:
                return f"agent {k} out of range"
        if cur != apply_modality(mod, known[w.refs[0]]):
            return f"not {mod} applied to line {w.refs[0]}"
        return None
    if w.kind == "UInd":
        prem = known[w.refs[0]]
        # premise: chi -> (~phi & X chi), i.e. ~(chi & ~(~phi & X chi))
        try:
            chi, body = _split_implies(prem)
            if not (isinstance(body, And) and isinstance(body.left, Not) and body.right == Next(chi)):
                raise ValueError("wrong shape")
            nphi = body.left
        except ValueError:
            return f"line {w.refs[0]} is not of the form chi -> (~phi & X chi)"
        phi = nphi.sub
        try:
            c_chi, c_body = _split_implies(cur)
        except ValueError:
            return "conclusion is not of the form chi -> ~U(phi, psi)"
        if c_chi != chi or not (isinstance(c_body, Not) and isinstance(c_body.sub, Until)
                                and c_body.sub.left == phi):
            return "conclusion is not chi -> ~U(phi, psi) for the premise's chi and phi"
        if w.psi is not None and c_body.sub.right != w.psi:
            return "conclusion does not use the stated psi"
        return None
    return f"unknown rule {w.kind}"


def _split_implies(f: Formula) -> tuple[Formula, Formula]:
    if isinstance(f, Not) and isinstance(f.sub, And) and isinstance(f.sub.right, Not):
        return f.sub.left, f.sub.right.sub
    raise ValueError("not an implication")


def check(script: ProofScript, agents: int, goal: Optional[Formula] = None) -> CheckResult:
    """Accept iff every line is correctly justified (and the last line is ``goal``, if given)."""
    known: dict[int, Formula] = {}
    last = 0
    for line in script.lines:
        if line.number <= last:
            return CheckResult(False, line.number, "line numbers must increase")
        for a in _agents(line.formula):
            if a > agents:
                return CheckResult(False, line.number, f"agent {a} out of range")
        why = _check_line(line, known, agents)
        if why:
            return CheckResult(False, line.number, why)
        known[line.number] = line.formula
        last = line.number
    if not script.lines:
        return CheckResult(False, None, "empty script")
    if goal is not None and script.lines[-1].formula != goal:
        return CheckResult(False, script.lines[-1].number, "last line is not the goal")
    return CheckResult(True)


def _agents(f: Formula) -> set[int]:
    return {g.agent for g in walk(f) if isinstance(g, (Stit, Ought))}


# building scripts ------------------------------------------------------------------

class _Builder:
    def __init__(self, start: int = 1):
        self.lines: list[ProofLine] = []
        self.n = start - 1

    def add(self, f: Formula, why: Justification) -> int:
        self.n += 1
        self.lines.append(ProofLine(self.n, f, why))
        return self.n

    def axiom(self, f, sid):
        return self.add(f, Justification("Axiom", schema=sid))

    def mp(self, i, j, f):
        return self.add(f, Justification("MP", (i, j)))

    def nec(self, mod, i, f):
        return self.add(f, Justification("Nec", (i,), modality=mod))

    def chain(self, premises: Sequence[tuple[int, Formula]], goal: Formula) -> int:
        """PC tautology ``p1 -> (p2 -> ... -> goal)`` discharged by MP."""
        imp = goal
        for _, f in reversed(premises):
            imp = Implies(f, imp)
        cur = self.axiom(imp, "PC")
        for n, f in premises:
            imp = imp.sub.right.sub  # strip "f ->"
            cur = self.mp(n, cur, imp)
        return cur

    def next_mono(self, n: int, a: Formula, b: Formula) -> int:
        """From line ``n`` proving ``a -> b``, derive ``X a -> X b``."""
        x = self.nec("X", n, Next(Implies(a, b)))
        k = self.axiom(Implies(Next(Implies(a, b)), Implies(Next(a), Next(b))), "K-X")
        return self.mp(x, k, Implies(Next(a), Next(b)))

    def script(self) -> ProofScript:
        return ProofScript(self.lines)


def until_weakening(alpha: Formula, beta: Formula, start: int = 1) -> ProofScript:
    """Script proving ``U(alpha, beta) -> (alpha | beta)`` from (UFix)."""
    b = _Builder(start)
    u = Until(alpha, beta)
    fix = b.axiom(Iff(u, Or(alpha, And(beta, Next(u)))), "UFix")
    b.chain([(fix, b.lines[-1].formula)], Implies(u, Or(alpha, beta)))
    return b.script()


BUNDLED_UNTIL_SCRIPT = str(until_weakening(Atom("p"), Atom("q")))


class PremiseError(ValueError):
    pass


def derive_extra_rule(phi: Formula, alpha: Formula, beta: Formula,
                      proof1: ProofScript, proof2: ProofScript, agents: int = 1) -> ProofScript:
    """From proofs of ``phi -> ~alpha`` and ``phi -> X(phi | (~alpha & ~beta))``, emit a proof of ``phi -> ~U(alpha, beta)``."""
    want1 = Implies(phi, Not(alpha))
    escape = Or(phi, And(Not(alpha), Not(beta)))
    want2 = Implies(phi, Next(escape))
    for p, want, name in ((proof1, want1, "first"), (proof2, want2, "second")):
        if p.conclusion != want:
            raise PremiseError(f"{name} premise must conclude {render(want, True)}")
        res = check(p, agents)
        if not res:
            raise PremiseError(f"{name} premise does not check: {res}")

    # premises first, numbered consecutively from 1
    p1 = proof1.renumbered(1 - proof1.lines[0].number)
    p2 = proof2.renumbered(p1.lines[-1].number + 1 - proof2.lines[0].number)
    b = _Builder(p2.lines[-1].number + 1)
    prem1, prem2 = p1.lines[-1].number, p2.lines[-1].number

    u = Until(alpha, beta)
    ab = Or(alpha, beta)
    chi = And(phi, u)
    fix_f = Iff(u, Or(alpha, And(beta, Next(u))))
    fix = b.axiom(fix_f, "UFix")
    weak = b.chain([(fix, fix_f)], Implies(u, ab))
    xweak = b.next_mono(weak, u, ab)                                   # XU -> X(a|b)
    esc = b.axiom(Implies(escape, Implies(ab, phi)), "PC")
    xesc = b.next_mono(esc, escape, Implies(ab, phi))                  # X esc -> X((a|b) -> phi)
    kx = b.axiom(Implies(Next(Implies(ab, phi)), Implies(Next(ab), Next(phi))), "K-X")
    pair = b.axiom(Implies(phi, Implies(u, chi)), "PC")
    xpair = b.next_mono(pair, phi, Implies(u, chi))                    # X phi -> X(U -> chi)
    kx2 = b.axiom(Implies(Next(Implies(u, chi)), Implies(Next(u), Next(chi))), "K-X")
    facts = [(prem1, want1), (prem2, want2), (fix, fix_f)]
    facts += [(n, _line(b, n)) for n in (xweak, xesc, kx, xpair, kx2)]
    step = b.chain(facts, Implies(chi, And(Not(alpha), Next(chi))))
    ind = b.add(Implies(chi, Not(u)), Justification("UInd", (step,), psi=beta))
    b.chain([(ind, Implies(chi, Not(u)))], Implies(phi, Not(u)))
    return ProofScript(p1.lines + p2.lines + b.lines)


def _line(b: _Builder, n: int) -> Formula:
    for l in b.lines:
        if l.number == n:
            return l.formula
    raise KeyError(n)


def prove_tautology(f: Formula) -> ProofScript:
    """One-line script for a propositional tautology."""
    if not is_tautology(f):
        raise ValueError("not a tautology")
    return ProofScript([ProofLine(1, f, Justification("Axiom", schema="PC"))])


def prove_via_next(phi: Formula, inner: Formula, target: Formula) -> ProofScript:
    """Prove ``phi -> X target`` when ``phi -> X inner`` and ``inner -> target`` are tautologies."""
    b = _Builder()
    base = b.axiom(Implies(inner, target), "PC")
    mono = b.next_mono(base, inner, target)
    b.chain([(mono, Implies(Next(inner), Next(target)))], Implies(phi, Next(target)))
    return b.script()
