"""Finite DTDS Kripke premodels: construction, structural audit, evaluation.

States are kept as names on the outside and as bit positions on the inside;
every state set is a Python ``int`` bitmask.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .syntax import (
    And, Atom, Bottom, Box, ClosureSet, Formula, Implies, Iff, Next, Not, Or,
    Ought, Stit, StitAgt, Top, Until, agents_in, parse, postorder, render,
)


class MalformedModelError(ValueError):
    """Raised for structurally broken input (bad partitions, unknown states)."""


class InvalidModelError(ValueError):
    """Raised when a model fails its audit and invalid models are not allowed."""

    def __init__(self, report: "AuditReport"):
        super().__init__("model violates " + ", ".join(sorted(report.tags())))
        self.report = report


@dataclass(frozen=True)
class Violation:
    tag: str
    witness: tuple
    agent: Optional[int] = None

    def __str__(self) -> str:
        who = f"[agent {self.agent}]" if self.agent is not None else ""
        return f"{self.tag}{who}: {', '.join(map(str, self.witness))}"


@dataclass
class AuditReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def tags(self) -> set[str]:
        return {v.tag for v in self.violations}

    def add(self, tag: str, witness, agent: Optional[int] = None) -> None:
        self.violations.append(Violation(tag, tuple(witness), agent))

    def to_json(self) -> list[dict]:
        return [{"tag": v.tag, "agent": v.agent, "witness": list(v.witness)} for v in self.violations]


def _bits(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def _partition_masks(blocks: Sequence[Iterable[int]], n: int, label: str) -> tuple[list[int], list[int]]:
    """Validate a partition of range(n); return (block masks, block index per state)."""
    owner = [-1] * n
    masks = []
    for b, block in enumerate(blocks):
        mask = 0
        block = list(block)
        if not block:
            raise MalformedModelError(f"{label}: empty block")
        for s in block:
            if owner[s] != -1:
                raise MalformedModelError(f"{label}: state {s} appears in two blocks")
            owner[s] = b
            mask |= 1 << s
        masks.append(mask)
    missing = [s for s in range(n) if owner[s] == -1]
    if missing:
        raise MalformedModelError(f"{label}: blocks do not cover state {missing[0]}")
    return masks, owner


class Premodel:
    """A finite DTDS Kripke premodel.

    ``stit`` maps each agent ``1..agents`` to a partition, ``ought`` maps each
    agent to an edge list.  Partitions and edges may use state names or
    indices.
    """

    def __init__(
        self,
        states: Sequence[str],
        agents: int,
        box: Sequence[Iterable],
        stit: Mapping[int, Sequence[Iterable]],
        agt: Sequence[Iterable],
        ought: Mapping[int, Iterable[tuple]],
        next: Iterable[tuple],
        valuation: Optional[Mapping[str, Iterable]] = None,
    ):
        if not states:
            raise MalformedModelError("a premodel needs at least one state")
        if agents < 1:
            raise MalformedModelError("a premodel needs at least one agent")
        self.states = tuple(str(s) for s in states)
        if len(set(self.states)) != len(self.states):
            raise MalformedModelError("duplicate state names")
        self.n = len(self.states)
        self.agents = agents
        self.full = (1 << self.n) - 1
        self._index = {s: i for i, s in enumerate(self.states)}

        self.box_blocks, self.box_of = _partition_masks(self._blocks(box), self.n, "box")
        self.stit_blocks, self.stit_of = {}, {}
        for i in range(1, agents + 1):
            if i not in stit:
                raise MalformedModelError(f"missing partition for agent {i}")
            self.stit_blocks[i], self.stit_of[i] = _partition_masks(self._blocks(stit[i]), self.n, f"stit_{i}")
        self.agt_blocks, self.agt_of = _partition_masks(self._blocks(agt), self.n, "agt")

        self.ought_succ: dict[int, list[int]] = {}
        for i in range(1, agents + 1):
            succ = [0] * self.n
            for a, b in ought.get(i, ()):
                succ[self.idx(a)] |= 1 << self.idx(b)
            self.ought_succ[i] = succ
        self.next_succ = [0] * self.n
        for a, b in next:
            self.next_succ[self.idx(a)] |= 1 << self.idx(b)
        self.valuation: dict[str, int] = {}
        for p, members in (valuation or {}).items():
            mask = 0
            for s in members:
                mask |= 1 << self.idx(s)
            self.valuation[p] = mask
        self._extensions: dict[Formula, int] = {}

    # -- accessors -----------------------------------------------------------

    def idx(self, s: Union[str, int]) -> int:
        if isinstance(s, int) and not isinstance(s, bool):
            if not 0 <= s < self.n:
                raise MalformedModelError(f"state index {s} out of range")
            return s
        try:
            return self._index[str(s)]
        except KeyError:
            raise MalformedModelError(f"unknown state {s!r}") from None

    def _blocks(self, blocks):
        return [[self.idx(s) for s in block] for block in blocks]

    def names(self, mask: int) -> list[str]:
        return [self.states[i] for i in _bits(mask)]

    def box_block(self, s: int) -> int:
        return self.box_blocks[self.box_of[s]]

    def stit_block(self, i: int, s: int) -> int:
        return self.stit_blocks[i][self.stit_of[i][s]]

    def agt_block(self, s: int) -> int:
        return self.agt_blocks[self.agt_of[s]]

    def block(self, tag, s: int) -> int:
        """Equivalence class of ``s`` for tag ``'box'``, ``'agt'`` or an agent index."""
        if tag == "box":
            return self.box_block(s)
        if tag == "agt":
            return self.agt_block(s)
        return self.stit_block(tag, s)

    def successors(self, s: int) -> list[int]:
        return _bits(self.next_succ[s])

    def edges(self, succ: Sequence[int]) -> list[tuple[int, int]]:
        return [(a, b) for a in range(self.n) for b in _bits(succ[a])]

    def atom_mask(self, name: str) -> int:
        # atoms the model does not mention are false everywhere
        return self.valuation.get(name, 0)

    # -- evaluation ----------------------------------------------------------

    def extension(self, f: Formula) -> int:
        """Bitmask of the states satisfying ``f``."""
        ext = self._extensions.get(f)
        if ext is None:
            prog = _Program(f)
            vals = prog.run(self)
            self._extensions.update(zip(prog.nodes, vals))
            ext = vals[-1]
        return ext

    def truth_set(self, f: Formula) -> set[str]:
        return set(self.names(self.extension(f)))

    def eval(self, s: Union[str, int], f: Formula) -> bool:
        return bool(self.extension(f) >> self.idx(s) & 1)

    def valid(self, f: Formula) -> bool:
        return self.extension(f) == self.full

    # -- serialisation -------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "agents": self.agents,
            "states": list(self.states),
            "box": [self.names(b) for b in self.box_blocks],
        }
        for i in range(1, self.agents + 1):
            d[f"stit_{i}"] = [self.names(b) for b in self.stit_blocks[i]]
        d["agt"] = [self.names(b) for b in self.agt_blocks]
        for i in range(1, self.agents + 1):
            d[f"ought_{i}"] = [[self.states[a], self.states[b]] for a, b in self.edges(self.ought_succ[i])]
        d["next"] = [[self.states[a], self.states[b]] for a, b in self.edges(self.next_succ)]
        d["valuation"] = {p: self.names(m) for p, m in sorted(self.valuation.items())}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Premodel":
        try:
            agents = int(d["agents"])
            return cls(
                states=d["states"],
                agents=agents,
                box=d["box"],
                stit={i: d[f"stit_{i}"] for i in range(1, agents + 1) if f"stit_{i}" in d},
                agt=d["agt"],
                ought={i: [tuple(e) for e in d.get(f"ought_{i}", [])] for i in range(1, agents + 1)},
                next=[tuple(e) for e in d["next"]],
                valuation=d.get("valuation", {}),
            )
        except KeyError as e:
            raise MalformedModelError(f"missing field {e.args[0]!r}") from None

    def __eq__(self, other):
        return isinstance(other, Premodel) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))

    def __repr__(self):
        return f"Premodel(states={list(self.states)}, agents={self.agents})"


class _Program:
    """A formula flattened into postorder so repeated evaluation skips hashing."""

    def __init__(self, f: Formula):
        nodes = self.nodes = postorder(f)
        pos = {g: k for k, g in enumerate(nodes)}
        self.ops = []
        for g in nodes:
            kids = tuple(pos[c] for c in g.children())
            if isinstance(g, Atom):
                self.ops.append(("atom", g.name, kids))
            elif isinstance(g, Top):
                self.ops.append(("top", None, kids))
            elif isinstance(g, Bottom):
                self.ops.append(("bot", None, kids))
            elif isinstance(g, Not):
                self.ops.append(("not", None, kids))
            elif isinstance(g, And):
                self.ops.append(("and", None, kids))
            elif isinstance(g, Box):
                self.ops.append(("part", "box", kids))
            elif isinstance(g, StitAgt):
                self.ops.append(("part", "agt", kids))
            elif isinstance(g, Stit):
                self.ops.append(("part", g.agent, kids))
            elif isinstance(g, Ought):
                self.ops.append(("ought", g.agent, kids))
            elif isinstance(g, Next):
                self.ops.append(("next", None, kids))
            elif isinstance(g, Until):
                self.ops.append(("until", None, kids))
            else:
                raise TypeError(f"unknown node {g!r}")
        self.agents = agents_in(f)

    def run(self, m: Premodel) -> list[int]:
        for a in self.agents:
            if a > m.agents:
                raise ValueError(f"formula mentions agent {a} but the model has {m.agents}")
        full = m.full
        vals: list[int] = []
        for op, arg, kids in self.ops:
            if op == "atom":
                v = m.valuation.get(arg, 0)
            elif op == "top":
                v = full
            elif op == "bot":
                v = 0
            elif op == "not":
                v = full & ~vals[kids[0]]
            elif op == "and":
                v = vals[kids[0]] & vals[kids[1]]
            elif op == "part":
                e = vals[kids[0]]
                blocks = m.box_blocks if arg == "box" else m.agt_blocks if arg == "agt" else m.stit_blocks[arg]
                v = 0
                for b in blocks:
                    if b & ~e == 0:
                        v |= b
            elif op in ("ought", "next"):
                e = vals[kids[0]]
                succ = m.ought_succ[arg] if op == "ought" else m.next_succ
                v = 0
                for s in range(m.n):
                    if succ[s] & ~e == 0:
                        v |= 1 << s
            else:  # until: least fixpoint of  left | (right & EX(.))
                goal, hold = vals[kids[0]], vals[kids[1]]
                v = goal
                while True:
                    grow = 0
                    cand = hold & ~v
                    for s in _bits(cand):
                        if m.next_succ[s] & v:
                            grow |= 1 << s
                    if not grow:
                        break
                    v |= grow
            vals.append(v)
        return vals


# audit ---------------------------------------------------------------------------

def audit(m: Premodel) -> AuditReport:
    """Check (D1), (D2), (D3*), (D4*), (D5)-(D8) and seriality of the next relation.

    Each failing condition instance is reported once with a witness tuple of
    state names.
    """
    rep = AuditReport()
    name = m.states
    agents = range(1, m.agents + 1)

    for i in agents:
        for s in range(m.n):
            bad = m.stit_block(i, s) & ~m.box_block(s)
            for t in _bits(bad):
                if s < t:
                    rep.add("D1", (name[s], name[t]), i)

    for bi, B in enumerate(m.box_blocks):
        per_agent = [[b for b in m.stit_blocks[i] if b & B] for i in agents]
        for choice in itertools.product(*per_agent):
            inter = B
            for b in choice:
                inter &= b
            if not inter:
                rep.add("D2", tuple(name[_bits(b)[0]] for b in choice))

    for i in agents:
        for s in range(m.n):
            bad = m.agt_block(s) & ~m.stit_block(i, s)
            for t in _bits(bad):
                if s < t:
                    rep.add("D3*", (name[s], name[t]), i)

    for s in range(m.n):
        if not m.next_succ[s]:
            rep.add("serial", (name[s],))
    for s in range(m.n):
        for t in m.successors(s):
            for u in _bits(m.box_block(t)):
                # need w with s R_Agt w and w -> u
                if not any(m.next_succ[w] >> u & 1 for w in _bits(m.agt_block(s))):
                    rep.add("D4*", (name[s], name[t], name[u]))

    for i in agents:
        succ = m.ought_succ[i]
        for s in range(m.n):
            for t in _bits(succ[s] & ~m.box_block(s)):
                rep.add("D5", (name[s], name[t]), i)
        for s in range(m.n):
            if not succ[s]:
                rep.add("D6", (name[s],), i)
        for s in range(m.n):
            for t in _bits(succ[s]):
                for u in _bits(m.stit_block(i, t) & ~succ[s]):
                    rep.add("D7", (name[s], name[t], name[u]), i)
        for s in range(m.n):
            for t in _bits(m.box_block(s)):
                for u in _bits(succ[t] & ~succ[s]):
                    rep.add("D8", (name[s], name[t], name[u]), i)
    return rep


# side conditions -------------------------------------------------------------------

@dataclass(frozen=True)
class SideFailure:
    kind: str  # "XFunc" or "UFix"
    formula: Formula
    state: str

    def __str__(self):
        return f"{self.kind} {render(self.formula, True)} fails at {self.state}"


def xfunc_instance(f: Next) -> Formula:
    return Iff(f, Not(Next(Not(f.sub))))


def ufix_instance(f: Until) -> Formula:
    return Iff(f, Or(f.left, And(f.right, Next(f))))


def check_side_conditions(m: Premodel, sigma: ClosureSet) -> list[SideFailure]:
    """Instances of (XFunc) and (UFix) over ``sigma`` that are not valid on ``m``."""
    out = []
    for f in sigma.nexts():
        bad = m.full & ~m.extension(xfunc_instance(f))
        out.extend(SideFailure("XFunc", f, s) for s in m.names(bad))
    for f in sigma.untils():
        bad = m.full & ~m.extension(ufix_instance(f))
        out.extend(SideFailure("UFix", f, s) for s in m.names(bad))
    return out


# io --------------------------------------------------------------------------------

def load_premodel(path: Union[str, Path], allow_invalid: bool = False) -> Premodel:
    with open(path) as fh:
        m = Premodel.from_dict(json.load(fh))
    if not allow_invalid:
        rep = audit(m)
        if not rep.ok:
            raise InvalidModelError(rep)
    return m


def dump_premodel(m: Premodel, path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        json.dump(m.to_dict(), fh, indent=2)
        fh.write("\n")


def eval_text(m: Premodel, state: str, text: str) -> bool:
    return m.eval(state, parse(text, m.agents))
