"""Formulas of the temporal deontic STIT language.

Only the primitive connectives are stored as nodes.  Disjunction, implication,
the diamonds, ``M_i``, ``F`` and ``G`` are produced by the helper
constructors below (and by the parser) as combinations of primitives, and the
renderer folds them back when ``abbreviate=True``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Iterator, Optional, Union


class Formula:
    """Base class of all formula nodes."""

    __slots__ = ()

    def children(self) -> tuple["Formula", ...]:
        return ()

    def __str__(self) -> str:
        return render(self, abbreviate=True)


@dataclass(frozen=True, slots=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True, slots=True)
class Top(Formula):
    pass


@dataclass(frozen=True, slots=True)
class Bottom(Formula):
    pass


@dataclass(frozen=True, slots=True)
class Not(Formula):
    sub: Formula

    def children(self):
        return (self.sub,)


@dataclass(frozen=True, slots=True)
class And(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, slots=True)
class Box(Formula):
    sub: Formula

    def children(self):
        return (self.sub,)


@dataclass(frozen=True, slots=True)
class Stit(Formula):
    agent: int
    sub: Formula

    def children(self):
        return (self.sub,)


@dataclass(frozen=True, slots=True)
class StitAgt(Formula):
    sub: Formula

    def children(self):
        return (self.sub,)


@dataclass(frozen=True, slots=True)
class Ought(Formula):
    agent: int
    sub: Formula

    def children(self):
        return (self.sub,)


@dataclass(frozen=True, slots=True)
class Next(Formula):
    sub: Formula

    def children(self):
        return (self.sub,)


@dataclass(frozen=True, slots=True)
class Until(Formula):
    """``Until(left, right)``: ``left`` eventually holds, ``right`` holds until then."""

    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


TOP = Top()
BOTTOM = Bottom()

RELATIONAL = (Box, Stit, StitAgt, Ought)


# derived connectives -------------------------------------------------------

def Or(a: Formula, b: Formula) -> Formula:
    return Not(And(Not(a), Not(b)))


def Implies(a: Formula, b: Formula) -> Formula:
    return Not(And(a, Not(b)))


def Iff(a: Formula, b: Formula) -> Formula:
    return And(Implies(a, b), Implies(b, a))


def Dia(a: Formula) -> Formula:
    return Not(Box(Not(a)))


def Chance(agent: int, a: Formula) -> Formula:
    """``<i> a``, the dual of ``[i]``."""
    return Not(Stit(agent, Not(a)))


def ChanceAgt(a: Formula) -> Formula:
    return Not(StitAgt(Not(a)))


def May(agent: int, a: Formula) -> Formula:
    return Not(Ought(agent, Not(a)))


def Eventually(a: Formula) -> Formula:
    return Until(a, TOP)


def Always(a: Formula) -> Formula:
    return Not(Until(Not(a), TOP))


def conj(items: Iterable[Formula]) -> Formula:
    """Left-nested conjunction; the empty conjunction is ``true``."""
    items = list(items)
    if not items:
        return TOP
    return reduce(And, items)


def disj(items: Iterable[Formula]) -> Formula:
    items = list(items)
    if not items:
        return BOTTOM
    return reduce(Or, items)


def dot_neg(f: Formula) -> Formula:
    """``~f`` unless ``f`` is already a negation, in which case its body."""
    if isinstance(f, Not):
        return f.sub
    return Not(f)


# structural helpers ----------------------------------------------------------

def walk(f: Formula) -> Iterator[Formula]:
    stack = [f]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children()))


def size(f: Formula) -> int:
    return sum(1 for _ in walk(f))


def subformulas(f: Formula) -> set[Formula]:
    return set(walk(f))


def atoms(f: Formula) -> set[str]:
    return {g.name for g in walk(f) if isinstance(g, Atom)}


def agents_in(f: Formula) -> set[int]:
    return {g.agent for g in walk(f) if isinstance(g, (Stit, Ought))}


def postorder(f: Formula) -> list[Formula]:
    """Distinct subformulas, children before parents."""
    seen: set[Formula] = set()
    out: list[Formula] = []

    def visit(g: Formula) -> None:
        if g in seen:
            return
        for c in g.children():
            visit(c)
        seen.add(g)
        out.append(g)

    visit(f)
    return out


def modal_reach(f: Formula) -> Optional[float]:
    """Latest time offset at which a relational operator inside ``f`` is evaluated.

    ``None`` when ``f`` has no relational operator, ``math.inf`` when one sits
    under an until.
    """
    if isinstance(f, (Atom, Top, Bottom)):
        return None
    if isinstance(f, RELATIONAL):
        inner = modal_reach(f.sub)
        return 0 if inner is None else inner
    if isinstance(f, Next):
        inner = modal_reach(f.sub)
        return None if inner is None else inner + 1
    if isinstance(f, Until):
        if modal_reach(f.left) is None and modal_reach(f.right) is None:
            return None
        return math.inf
    reaches = [r for r in (modal_reach(c) for c in f.children()) if r is not None]
    return max(reaches) if reaches else None


def check_agents(f: Formula, agent_count: int) -> None:
    for a in agents_in(f):
        if not 1 <= a <= agent_count:
            raise ValueError(f"agent {a} outside 1..{agent_count} in {render(f)}")


# closure -------------------------------------------------------------------------

@dataclass(frozen=True)
class ClosureSet:
    """A finite filtration-ready set of formulas."""

    members: tuple[Formula, ...]
    agent_count: int

    def __contains__(self, f: object) -> bool:
        return f in self._index

    def __iter__(self) -> Iterator[Formula]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    @property
    def _index(self) -> frozenset:
        # frozen dataclass: memoise through __dict__
        cached = self.__dict__.get("_idx")
        if cached is None:
            cached = frozenset(self.members)
            object.__setattr__(self, "_idx", cached)
        return cached

    def untils(self) -> list[Until]:
        return [f for f in self.members if isinstance(f, Until)]

    def nexts(self) -> list[Next]:
        return [f for f in self.members if isinstance(f, Next)]

    def atoms(self) -> set[str]:
        return {f.name for f in self.members if isinstance(f, Atom)}


def _sort_key(f: Formula):
    return (size(f), render(f))


def closure(f: Union[Formula, Iterable[Formula]], agent_count: Optional[int] = None) -> ClosureSet:
    """Smallest filtration-ready set containing ``f`` (or every formula in ``f``)."""
    roots = [f] if isinstance(f, Formula) else list(f)
    base: set[Formula] = set()
    for r in roots:
        base |= subformulas(r)
    extra = set()
    for g in base:
        if isinstance(g, Until):
            extra.add(Next(g))
        elif isinstance(g, Ought):
            extra.add(Stit(g.agent, g.sub))
    base |= extra
    base |= {dot_neg(g) for g in base}
    if agent_count is None:
        agent_count = max((a for r in roots for a in agents_in(r)), default=1)
    return ClosureSet(tuple(sorted(base, key=_sort_key)), agent_count)


# rendering -----------------------------------------------------------------------

def _agent_str(a: int) -> str:
    return str(a)


def render(f: Formula, abbreviate: bool = False) -> str:
    """Concrete syntax for ``f``; the output always parses back to ``f``."""
    return _render(f, abbreviate, top=True)


def _binary(f: Formula, abbreviate: bool):
    """Return (op, left, right) if ``f`` should print as a binary formula."""
    if isinstance(f, And):
        if abbreviate:
            l, r = f.left, f.right
            if (isinstance(l, Not) and isinstance(l.sub, And) and isinstance(l.sub.right, Not)
                    and isinstance(r, Not) and isinstance(r.sub, And) and isinstance(r.sub.right, Not)
                    and l.sub.left == r.sub.right.sub and l.sub.right.sub == r.sub.left):
                return "<->", l.sub.left, l.sub.right.sub
        return "&", f.left, f.right
    if abbreviate and isinstance(f, Not) and isinstance(f.sub, And):
        inner = f.sub
        if isinstance(inner.left, Not) and isinstance(inner.right, Not):
            return "|", inner.left.sub, inner.right.sub
        if isinstance(inner.right, Not):
            return "->", inner.left, inner.right.sub
    return None


def _render(f: Formula, abbreviate: bool, top: bool = False) -> str:
    bin_ = _binary(f, abbreviate)
    if bin_ is not None:
        op, l, r = bin_
        s = f"{_render(l, abbreviate)} {op} {_render(r, abbreviate)}"
        return s if top else f"({s})"
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Top):
        return "true"
    if isinstance(f, Bottom):
        return "false"
    if isinstance(f, Until):
        if abbreviate and isinstance(f.right, Top):
            return "F " + _render(f.left, abbreviate)
        return f"U({_render(f.left, abbreviate, True)}, {_render(f.right, abbreviate, True)})"
    if isinstance(f, Not):
        g = f.sub
        if abbreviate:
            if isinstance(g, Until) and isinstance(g.right, Top) and isinstance(g.left, Not):
                return "G " + _render(g.left.sub, abbreviate)
            if isinstance(g, (Box, Stit, StitAgt, Ought)) and isinstance(g.sub, Not):
                body = _render(g.sub.sub, abbreviate)
                if isinstance(g, Box):
                    return "dia " + body
                if isinstance(g, Stit):
                    return f"<{_agent_str(g.agent)}> {body}"
                if isinstance(g, StitAgt):
                    return "<*> " + body
                return f"M{g.agent} {body}"
        return "~" + _render(g, abbreviate)
    if isinstance(f, Box):
        return "box " + _render(f.sub, abbreviate)
    if isinstance(f, Stit):
        return f"[{_agent_str(f.agent)}] " + _render(f.sub, abbreviate)
    if isinstance(f, StitAgt):
        return "[*] " + _render(f.sub, abbreviate)
    if isinstance(f, Ought):
        return f"O{f.agent} " + _render(f.sub, abbreviate)
    if isinstance(f, Next):
        return "X " + _render(f.sub, abbreviate)
    raise TypeError(f"not a formula: {f!r}")


# parsing -------------------------------------------------------------------------

class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.message = message
        self.position = position


_TOKEN = re.compile(r"\s*(?:(<->|->)|([~&|()\[\],<>*])|(\d+)|([A-Za-z_][A-Za-z0-9_]*))")
_KEYWORDS = {"box", "dia", "true", "false", "X", "F", "G", "U", "O", "M"}
_IDENT = re.compile(r"[a-z_][A-Za-z0-9_]*\Z")
_MODAL_AGENT = re.compile(r"([OM])(\d+)\Z")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            stripped = len(text) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[stripped]!r}", stripped)
        start = m.start(m.lastindex)
        if m.group(1) or m.group(2):
            tokens.append(("op", m.group(m.lastindex), start))
        elif m.group(3):
            tokens.append(("nat", m.group(3), start))
        else:
            tokens.append(("word", m.group(4), start))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, agent_count: Optional[int]):
        self.tokens = _tokenize(text)
        self.i = 0
        self.agent_count = agent_count

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.advance()
        if val != value or kind not in ("op",):
            raise ParseError(f"expected {value!r}, found {val or 'end of input'!r}", pos)

    def agent(self, raw: str, pos: int) -> int:
        a = int(raw)
        if a < 1 or (self.agent_count is not None and a > self.agent_count):
            hi = self.agent_count if self.agent_count is not None else "n"
            raise ParseError(f"agent index {a} outside 1..{hi}", pos)
        return a

    def parse(self) -> Formula:
        f = self.iff()
        kind, val, pos = self.peek()
        if kind != "eof":
            raise ParseError(f"unexpected {val!r}", pos)
        return f

    def iff(self) -> Formula:
        f = self.imp()
        while self.peek()[1] == "<->" and self.peek()[0] == "op":
            self.advance()
            f = Iff(f, self.imp())
        return f

    def imp(self) -> Formula:
        f = self.or_()
        if self.peek()[1] == "->" and self.peek()[0] == "op":
            self.advance()
            return Implies(f, self.imp())
        return f

    def or_(self) -> Formula:
        f = self.and_()
        while self.peek()[1] == "|" and self.peek()[0] == "op":
            self.advance()
            f = Or(f, self.and_())
        return f

    def and_(self) -> Formula:
        f = self.unary()
        while self.peek()[1] == "&" and self.peek()[0] == "op":
            self.advance()
            f = And(f, self.unary())
        return f

    def _agent_token(self) -> int:
        kind, val, pos = self.advance()
        if kind != "nat":
            raise ParseError(f"expected agent index, found {val or 'end of input'!r}", pos)
        return self.agent(val, pos)

    def unary(self) -> Formula:
        kind, val, pos = self.advance()
        if kind == "op":
            if val == "~":
                return Not(self.unary())
            if val == "(":
                f = self.iff()
                self.expect(")")
                return f
            if val in ("[", "<"):
                close = "]" if val == "[" else ">"
                k2, v2, p2 = self.peek()
                if v2 == "*" and k2 == "op":
                    self.advance()
                    agent = None
                else:
                    agent = self._agent_token()
                self.expect(close)
                body = self.unary()
                if val == "[":
                    return StitAgt(body) if agent is None else Stit(agent, body)
                return ChanceAgt(body) if agent is None else Chance(agent, body)
            raise ParseError(f"unexpected {val!r}", pos)
        if kind == "word":
            m = _MODAL_AGENT.match(val)
            if m or val in ("O", "M"):
                if m:
                    agent = self.agent(m.group(2), pos + 1)
                    op = m.group(1)
                else:
                    op = val
                    agent = self._agent_token()
                body = self.unary()
                return Ought(agent, body) if op == "O" else May(agent, body)
            if val == "box":
                return Box(self.unary())
            if val == "dia":
                return Dia(self.unary())
            if val == "X":
                return Next(self.unary())
            if val == "F":
                return Eventually(self.unary())
            if val == "G":
                return Always(self.unary())
            if val == "U":
                self.expect("(")
                left = self.iff()
                self.expect(",")
                right = self.iff()
                self.expect(")")
                return Until(left, right)
            if val == "true":
                return TOP
            if val == "false":
                return BOTTOM
            if val in _KEYWORDS or not _IDENT.match(val):
                raise ParseError(f"invalid identifier {val!r}", pos)
            return Atom(val)
        raise ParseError(f"unexpected {val or 'end of input'!r}", pos)


def parse(text: str, agent_count: Optional[int] = None) -> Formula:
    """Parse concrete syntax into a formula.

    ``agent_count`` bounds the agent indices that may appear; ``None`` only
    requires them to be positive.
    """
    if agent_count is not None and agent_count < 1:
        raise ValueError("agent_count must be at least 1")
    return _Parser(text, agent_count).parse()
