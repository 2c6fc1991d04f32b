"""Bounded satisfiability search over valid premodels.

Frames are enumerated (or sampled) up to a state bound; for each frame all
valuations of the formula's atoms are evaluated at once by packing one copy
of the frame per valuation into a single bitmask.  A hit must also satisfy
the side conditions for ``closure(f)`` and is then replayed through
``audit``, the side-condition check, premodel evaluation, unravelling and
``eval_at`` before it is reported.
"""
from __future__ import annotations

import itertools
import random
import time
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

from .lasso import LassoSystem
from .premodel import Premodel, _bits, audit, check_side_conditions, ufix_instance, xfunc_instance
from .syntax import (
    And, Atom, Bottom, Box, Formula, Next, Not, Ought, Stit, StitAgt, Top, Until,
    agents_in, atoms, closure, conj, modal_reach, postorder, walk,
)
from .transforms import unravel

EXHAUSTIVE_STATES = 3
EXHAUSTIVE_AGENTS = 2
EXHAUSTIVE_ATOMS = 2


@dataclass
class SatResult:
    verdict: str  # "SAT" or "UNSAT-UP-TO"
    bound: int
    agents: int
    explored: int
    exhaustive_up_to: int
    seed: int
    witness: Optional[Premodel] = None
    state: Optional[str] = None
    lasso: Optional[LassoSystem] = None
    notes: list = field(default_factory=list)

    @property
    def is_sat(self) -> bool:
        return self.verdict == "SAT"

    @property
    def complete(self) -> bool:
        """True when every premodel up to ``bound`` states was examined."""
        return self.exhaustive_up_to >= self.bound

    def summary(self) -> str:
        head = f"{self.verdict} bound={self.bound} agents={self.agents} seed={self.seed} " \
               f"explored={self.explored} exhaustive_up_to={self.exhaustive_up_to}"
        if self.is_sat:
            head += f" state={self.state} states={len(self.witness.states)}"
        return head

    def to_json(self) -> dict:
        d = {
            "verdict": self.verdict, "bound": self.bound, "agents": self.agents,
            "explored": self.explored, "exhaustive_up_to": self.exhaustive_up_to,
            "complete": self.complete, "seed": self.seed, "notes": list(self.notes),
        }
        if self.is_sat:
            d["state"] = self.state
            d["witness"] = self.witness.to_dict()
            d["lasso"] = self.lasso.to_dict(base_ref="witness")
        return d


# partitions ------------------------------------------------------------------------

def set_partitions(mask: int) -> Iterator[list[int]]:
    """All partitions of the states in ``mask``, coarsest first."""
    items = _bits(mask)
    out = []

    def rec(k, blocks):
        if k == len(items):
            out.append(list(blocks))
            return
        bit = 1 << items[k]
        for j in range(len(blocks)):
            blocks[j] |= bit
            rec(k + 1, blocks)
            blocks[j] ^= bit
        blocks.append(bit)
        rec(k + 1, blocks)
        blocks.pop()

    if items:
        rec(0, [])
    else:
        out.append([])
    out.sort(key=len)
    return iter(out)


def refinements(blocks: Sequence[int]) -> Iterator[list[int]]:
    for parts in itertools.product(*(list(set_partitions(b)) for b in blocks)):
        yield [b for p in parts for b in p]


def box_partitions(n: int) -> Iterator[list[int]]:
    """One partition per isomorphism type: contiguous blocks of non-decreasing size, coarsest first."""
    def sizes(rest, least):
        if rest == 0:
            yield []
            return
        for s in range(least, rest + 1):
            for tail in sizes(rest - s, s):
                yield [s] + tail
    shapes = sorted(sizes(n, 1), key=len)
    for shape in shapes:
        blocks, pos = [], 0
        for s in shape:
            blocks.append(((1 << s) - 1) << pos)
            pos += s
        yield blocks


def _block_of(blocks: Sequence[int], n: int) -> list[int]:
    of = [0] * n
    for b in blocks:
        for s in _bits(b):
            of[s] = b
    return of


def _meet(partitions: Sequence[Sequence[int]], n: int) -> list[int]:
    ofs = [_block_of(p, n) for p in partitions]
    seen, out = set(), []
    for s in range(n):
        b = (1 << n) - 1
        for of in ofs:
            b &= of[s]
        if b not in seen:
            seen.add(b)
            out.append(b)
    return out


def _d2_ok(box: Sequence[int], stit: Sequence[Sequence[int]]) -> bool:
    for B in box:
        per = [[b for b in p if b & B] for p in stit]
        for choice in itertools.product(*per):
            inter = B
            for b in choice:
                inter &= b
            if not inter:
                return False
    return True


def _d4_ok(n: int, box_of: Sequence[int], agt_of: Sequence[int], nxt: Sequence[int]) -> bool:
    for s in range(n):
        reach = 0
        for w in _bits(agt_of[s]):
            reach |= nxt[w]
        for t in _bits(nxt[s]):
            if box_of[t] & ~reach:
                return False
    return True


# frames ----------------------------------------------------------------------------

@dataclass
class Frame:
    n: int
    box: list[int]
    stit: dict[int, list[int]]
    agt: list[int]
    ought: dict[int, list[int]]  # successor masks per state
    next: list[int]

    def to_premodel(self, valuation: dict[str, int]) -> Premodel:
        names = [f"s{k}" for k in range(self.n)]
        return Premodel(
            names, len(self.stit),
            box=[_bits(b) for b in self.box],
            stit={i: [_bits(b) for b in bl] for i, bl in self.stit.items()},
            agt=[_bits(b) for b in self.agt],
            ought={i: [(s, t) for s in range(self.n) for t in _bits(succ[s])] for i, succ in self.ought.items()},
            next=[(s, t) for s in range(self.n) for t in _bits(self.next[s])],
            valuation={p: _bits(v) for p, v in valuation.items()},
        )


class _Needs:
    """Which parts of a frame a formula can observe."""

    def __init__(self, f: Formula, agents: int):
        nodes = list(walk(f))
        self.temporal = any(isinstance(g, (Next, Until)) for g in nodes)
        self.group = any(isinstance(g, StitAgt) for g in nodes)
        self.ought = {i for g in nodes if isinstance(g, Ought) for i in [g.agent]}
        self.agents = agents_in(f)
        self.n_agents = agents


def _ought_choices(box: Sequence[int], stit_i: Sequence[int], n: int) -> Iterator[list[int]]:
    """Ought successor lists satisfying (D5)-(D8): per box-block a non-empty union of [i]-blocks."""
    per_block = []
    for B in box:
        inside = [b for b in stit_i if b & B]
        opts = []
        for r in range(1, len(inside) + 1):
            for combo in itertools.combinations(inside, r):
                opts.append(sum(combo))
        per_block.append(opts)
    for pick in itertools.product(*per_block):
        succ = [0] * n
        for B, allowed in zip(box, pick):
            for s in _bits(B):
                succ[s] = allowed
        yield succ


_SERIAL_CACHE: dict[int, list[list[int]]] = {}


def _serial_relations(n: int) -> list[list[int]]:
    if n not in _SERIAL_CACHE:
        _SERIAL_CACHE[n] = [list(r) for r in itertools.product(range(1, 1 << n), repeat=n)]
    return _SERIAL_CACHE[n]


def enumerate_frames(n: int, agents: int, needs: _Needs) -> Iterator[Frame]:
    full = (1 << n) - 1
    for box in box_partitions(n):
        box_of = _block_of(box, n)
        stit_opts = []
        for i in range(1, agents + 1):
            if i in needs.agents or needs.group:
                stit_opts.append(list(refinements(box)))
            else:
                stit_opts.append([list(box)])
        for stits in itertools.product(*stit_opts):
            if not _d2_ok(box, stits):
                continue
            meet = _meet([box, *stits], n)
            agts = refinements(meet) if needs.group and agents > 1 else [meet]
            for agt in agts:
                agt_of = _block_of(agt, n)
                ought_opts = []
                for i in range(1, agents + 1):
                    if i in needs.ought:
                        ought_opts.append(list(_ought_choices(box, stits[i - 1], n)))
                    else:
                        ought_opts.append([box_of])
                nexts = _serial_relations(n) if needs.temporal else [[full] * n]
                for nxt in nexts:
                    if not _d4_ok(n, box_of, agt_of, nxt):
                        continue
                    for oughts in itertools.product(*ought_opts):
                        yield Frame(n, list(box), {i: list(stits[i - 1]) for i in range(1, agents + 1)},
                                    list(agt), {i: list(oughts[i - 1]) for i in range(1, agents + 1)}, list(nxt))


def _random_partition(items: Sequence[int], rng: random.Random) -> list[int]:
    if not items:
        return []
    k = rng.randint(1, len(items))
    blocks = [0] * k
    for s in items:
        blocks[rng.randrange(k)] |= 1 << s
    return [b for b in blocks if b]


def random_frame(n: int, agents: int, rng: random.Random, max_out: Optional[int] = None,
                 needs: Optional[_Needs] = None) -> Frame:
    """A random frame satisfying every premodel condition."""
    box = _random_partition(range(n), rng)
    box_of = _block_of(box, n)
    for _ in range(50):
        stits = [[b for B in box for b in _random_partition(_bits(B), rng)] for _ in range(agents)]
        if _d2_ok(box, stits):
            break
    else:
        stits = [[b for B in box for b in _random_partition(_bits(B), rng)]] + [list(box)] * (agents - 1)
    meet = _meet([box, *stits], n)
    if agents == 1 or (needs is not None and not needs.group) or rng.random() < 0.5:
        agt = meet
    else:
        agt = [b for M in meet for b in _random_partition(_bits(M), rng)]
    agt_of = _block_of(agt, n)
    ought = {}
    for i in range(1, agents + 1):
        succ = [0] * n
        for B in box:
            inside = [b for b in stits[i - 1] if b & B]
            chosen = [b for b in inside if rng.random() < 0.5] or [rng.choice(inside)]
            for s in _bits(B):
                succ[s] = sum(chosen)
        ought[i] = succ
    limit = n if max_out is None else max(1, min(max_out, n))
    nxt = [sum(1 << t for t in rng.sample(range(n), rng.randint(1, limit))) for _ in range(n)]
    # repair (D4*) by adding the missing transitions
    changed = True
    while changed:
        changed = False
        for s in range(n):
            reach = 0
            for w in _bits(agt_of[s]):
                reach |= nxt[w]
            for t in _bits(nxt[s]):
                missing = box_of[t] & ~reach
                if missing:
                    nxt[s] |= missing
                    reach |= missing
                    changed = True
    return Frame(n, box, {i: stits[i - 1] for i in range(1, agents + 1)}, agt, ought, nxt)


def random_premodel(n: int, agents: int, atoms: Sequence[str] = ("p", "q"), rng=None,
                    max_out: Optional[int] = None) -> Premodel:
    """A random premodel with at most ``n`` states that passes ``audit``."""
    rng = rng if isinstance(rng, random.Random) else random.Random(rng)
    frame = random_frame(rng.randint(1, n), agents, rng, max_out=max_out)
    val = {p: rng.getrandbits(frame.n) for p in atoms}
    return frame.to_premodel(val)


# packed evaluation -----------------------------------------------------------------

class _Packed:
    """Evaluate formulas on ``copies`` valuations of one frame simultaneously.

    Bit ``v * n + s`` stands for state ``s`` under valuation ``v``.
    """

    def __init__(self, n: int, atom_names: Sequence[str], valuations: Optional[Sequence[int]] = None):
        self.n = n
        self.atoms = list(atom_names)
        width = n * len(self.atoms)
        self.valuations = list(range(1 << width)) if valuations is None else list(valuations)
        copies = len(self.valuations)
        self.col0 = sum(1 << (v * n) for v in range(copies))
        self.all = (1 << (n * copies)) - 1
        self.atom_masks = {}
        block = (1 << n) - 1
        for j, p in enumerate(self.atoms):
            mask = 0
            for v, val in enumerate(self.valuations):
                mask |= ((val >> (j * n)) & block) << (v * n)
            self.atom_masks[p] = mask

    def valuation_of(self, copy: int) -> dict[str, int]:
        val = self.valuations[copy]
        block = (1 << self.n) - 1
        return {p: (val >> (j * self.n)) & block for j, p in enumerate(self.atoms)}

    def _flag(self, x: int, states: int) -> int:
        """Per copy (at bit ``v*n``): every state in ``states`` is set in ``x``."""
        f = self.col0
        for t in _bits(states):
            f &= x >> t
        return f

    def _any(self, x: int, states: int) -> int:
        f = 0
        for t in _bits(states):
            f |= x >> t
        return f & self.col0

    def _spread(self, flag: int, states: int) -> int:
        out = 0
        for s in _bits(states):
            out |= flag << s
        return out

    def run(self, frame: Frame, formulas: Sequence[Formula]) -> dict[Formula, int]:
        vals: dict[Formula, int] = {}
        for f in formulas:
            for g in postorder(f):
                if g in vals:
                    continue
                vals[g] = self._node(frame, g, vals)
        return vals

    def _part(self, blocks, x):
        out = 0
        for b in blocks:
            out |= self._spread(self._flag(x, b), b)
        return out

    def _universal(self, succ, x):
        out = 0
        cache = {}
        for s in range(self.n):
            if succ[s] not in cache:
                cache[succ[s]] = self._flag(x, succ[s])
            out |= cache[succ[s]] << s
        return out

    def _node(self, frame: Frame, g: Formula, vals) -> int:
        if isinstance(g, Atom):
            return self.atom_masks.get(g.name, 0)
        if isinstance(g, Top):
            return self.all
        if isinstance(g, Bottom):
            return 0
        if isinstance(g, Not):
            return self.all & ~vals[g.sub]
        if isinstance(g, And):
            return vals[g.left] & vals[g.right]
        if isinstance(g, Box):
            return self._part(frame.box, vals[g.sub])
        if isinstance(g, Stit):
            return self._part(frame.stit[g.agent], vals[g.sub])
        if isinstance(g, StitAgt):
            return self._part(frame.agt, vals[g.sub])
        if isinstance(g, Ought):
            return self._universal(frame.ought[g.agent], vals[g.sub])
        if isinstance(g, Next):
            return self._universal(frame.next, vals[g.sub])
        if isinstance(g, Until):
            goal, hold = vals[g.left], vals[g.right]
            v = goal
            while True:
                ex = 0
                for s in range(self.n):
                    ex |= self._any(v, frame.next[s]) << s
                w = v | (hold & ex)
                if w == v:
                    return v
                v = w
        raise TypeError(f"unknown node {g!r}")

    def copies_valid(self, x: int) -> int:
        return self._flag(x, (1 << self.n) - 1)


# search ----------------------------------------------------------------------------

class WitnessError(AssertionError):
    pass


def verify_witness(f: Formula, m: Premodel, state: str) -> LassoSystem:
    """Replay a witness: audit, side conditions, eval, unravel, eval_at.  Returns the lasso system."""
    rep = audit(m)
    if not rep.ok:
        raise WitnessError(f"witness fails audit: {rep}")
    sigma = closure(f, m.agents)
    side = check_side_conditions(m, sigma)
    if side:
        raise WitnessError(f"witness fails side conditions: {side[0]}")
    if not m.eval(state, f):
        raise WitnessError("formula false at the witness state")
    reach = modal_reach(f)
    horizon = None if reach is None or reach == float("inf") else int(reach)
    sys = unravel(m, sigma, seeds=[state], horizon=horizon)
    if not sys.eval_at(0, 0, f):
        raise WitnessError("formula false on the unravelled system")
    return sys


def _side_formula(f: Formula, agents: int) -> Formula:
    sigma = closure(f, agents)
    return conj([xfunc_instance(g) for g in sigma.nexts()] + [ufix_instance(g) for g in sigma.untils()])


def sat(f: Formula, max_states: int, agents: Optional[int] = None, seed: int = 0,
        max_frames: int = 2_000_000, random_frames: int = 3000, time_limit: Optional[float] = None) -> SatResult:
    """Search premodels with at most ``max_states`` states for one satisfying ``f``.

    Exhaustive for small bounds (at most 3 states, 2 agents and 2 atoms) and
    random sampling otherwise; ``exhaustive_up_to`` says how far the search
    was complete.  ``max_frames`` caps the exhaustive enumeration and
    ``random_frames`` the number of sampled frames per larger size.
    """
    if max_states < 1:
        raise ValueError("max_states must be at least 1")
    used = agents_in(f)
    agents = max(used, default=1) if agents is None else agents
    if agents < 1:
        raise ValueError("agents must be at least 1")
    if used and max(used) > agents:
        raise ValueError(f"formula mentions agent {max(used)} but only {agents} agents are allowed")
    atom_names = sorted(atoms(f))
    needs = _Needs(f, agents)
    side = _side_formula(f, agents)
    rng = random.Random(seed)
    deadline = None if time_limit is None else time.monotonic() + time_limit
    result = SatResult("UNSAT-UP-TO", max_states, agents, 0, 0, seed)
    exhaustive_ok = agents <= EXHAUSTIVE_AGENTS and len(atom_names) <= EXHAUSTIVE_ATOMS
    frames_seen = 0

    def try_frame(frame: Frame, packed: _Packed) -> bool:
        vals = packed.run(frame, [f, side])
        good = packed.copies_valid(vals[side])
        hits = vals[f] & packed._spread(good, (1 << frame.n) - 1)
        result.explored += len(packed.valuations)
        if not hits:
            return False
        low = _bits(hits & -hits)[0]
        copy, s = divmod(low, frame.n)
        m = frame.to_premodel(packed.valuation_of(copy))
        lasso = verify_witness(f, m, m.states[s])
        result.verdict, result.witness, result.state, result.lasso = "SAT", m, m.states[s], lasso
        return True

    for n in range(1, max_states + 1):
        width = n * len(atom_names)
        sample_vals = None if width <= 12 else [rng.getrandbits(width) for _ in range(256)]
        packed = _Packed(n, atom_names, sample_vals)
        if exhaustive_ok and n <= EXHAUSTIVE_STATES:
            complete = True
            for frame in enumerate_frames(n, agents, needs):
                frames_seen += 1
                if frames_seen > max_frames or (deadline and time.monotonic() > deadline):
                    complete = False
                    result.notes.append(f"exhaustive search at {n} states stopped by the resource limit")
                    break
                if try_frame(frame, packed):
                    return result
            if not complete:
                return result
            if result.exhaustive_up_to == n - 1:
                result.exhaustive_up_to = n
        else:
            for _ in range(random_frames):
                if deadline and time.monotonic() > deadline:
                    result.notes.append("random search stopped by the time limit")
                    return result
                frame = random_frame(n, agents, rng, needs=needs)
                if try_frame(frame, packed):
                    return result
            if sample_vals is not None:
                result.notes.append(f"valuations sampled at {n} states")
            result.notes.append(f"random search at {n} states is incomplete")
    return result


def find_countermodel(f: Formula, max_states: int, agents: Optional[int] = None, **kw) -> SatResult:
    """Search for a premodel falsifying ``f`` (a SAT verdict for its negation)."""
    if agents is None:
        agents = max(agents_in(f), default=1)
    return sat(Not(f), max_states, agents, **kw)
