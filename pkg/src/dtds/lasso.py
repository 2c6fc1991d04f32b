"""Finite interpreted systems whose histories are eventually periodic.

Every system here has finitely many histories and relations that become
periodic in time after some point, so formulas are evaluated exactly at every
``(history, t)``: truth tables are computed for one prefix plus one period and
``X``/``U`` wrap around the period.

The structural conditions (D0)-(D8) are only audited on the window
``t <= horizon``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .premodel import AuditReport, MalformedModelError, Premodel, _bits
from .syntax import (
    And, Atom, Bottom, Box, Formula, Next, Not, Ought, Stit, StitAgt, Top, Until,
    agents_in, postorder,
)

MAX_TIMELINE = 20_000


class ResourceError(RuntimeError):
    """A configured size budget was exceeded."""


def _group(keys: Sequence) -> list[int]:
    """Class masks (one per element) for a list of class keys."""
    masks: dict = {}
    for k, key in enumerate(keys):
        masks[key] = masks.get(key, 0) | (1 << k)
    return [masks[key] for key in keys]


class InterpretedSystem:
    """Common evaluation and audit machinery.

    Subclasses provide ``agents``, ``horizon``, ``__len__``, ``period()``,
    ``_keys(tag, t)``, ``_ought_mask(agent, k, t)`` and ``_atom(name, t)``.
    History sets are bitmasks over history indices.
    """

    agents: int
    horizon: int

    def __len__(self) -> int:
        raise NotImplementedError

    def period(self) -> tuple[int, int]:
        """``(start, length)``: from ``start`` on, time ``t`` behaves like ``t + length``."""
        raise NotImplementedError

    def label(self, k: int) -> str:
        return f"h{k}"

    def _keys(self, tag, t: int) -> list:
        raise NotImplementedError

    def _ought_mask(self, agent: int, k: int, t: int) -> int:
        raise NotImplementedError

    def _atom(self, name: str, t: int) -> int:
        raise NotImplementedError

    # -- cached relation views ---------------------------------------------

    def _cache(self) -> dict:
        c = self.__dict__.get("_memo")
        if c is None:
            c = self.__dict__["_memo"] = {}
        return c

    def norm_time(self, t: int) -> int:
        start, length = self.period()
        if t < start + length:
            return t
        return start + (t - start) % length

    def classes(self, tag, t: int) -> list[int]:
        """Mask of the equivalence class of every history at time ``t``."""
        t = self.norm_time(t)
        key = ("cls", tag, t)
        memo = self._cache()
        if key not in memo:
            memo[key] = _group(self._keys(tag, t))
        return memo[key]

    def ought_masks(self, agent: int, t: int) -> list[int]:
        t = self.norm_time(t)
        key = ("ought", agent, t)
        memo = self._cache()
        if key not in memo:
            memo[key] = [self._ought_mask(agent, k, t) for k in range(len(self))]
        return memo[key]

    def related(self, tag, k: int, k2: int, t: int) -> bool:
        if isinstance(tag, tuple) and tag[0] == "ought":
            return bool(self.ought_masks(tag[1], t)[k] >> k2 & 1)
        return bool(self.classes(tag, t)[k] >> k2 & 1)

    def tags(self) -> list:
        """Relation tags: 'box', agents 1..n, 'agt', ('ought', i)."""
        return ["box", *range(1, self.agents + 1), "agt", *[("ought", i) for i in range(1, self.agents + 1)]]

    # -- evaluation ----------------------------------------------------------

    def table(self, f: Formula) -> list[int]:
        """Per normalised time, the mask of histories satisfying ``f``."""
        memo = self._cache()
        key = ("table", f)
        if key in memo:
            return memo[key]
        for a in agents_in(f):
            if a > self.agents:
                raise ValueError(f"formula mentions agent {a} but the system has {self.agents}")
        start, length = self.period()
        T = start + length
        full = (1 << len(self)) - 1
        nxt = [t + 1 for t in range(T - 1)] + [start]
        tabs: dict[Formula, list[int]] = {}
        for g in postorder(f):
            if ("table", g) in memo:
                tabs[g] = memo[("table", g)]
                continue
            if isinstance(g, Atom):
                v = [self._atom(g.name, t) for t in range(T)]
            elif isinstance(g, Top):
                v = [full] * T
            elif isinstance(g, Bottom):
                v = [0] * T
            elif isinstance(g, Not):
                v = [full & ~x for x in tabs[g.sub]]
            elif isinstance(g, And):
                v = [a & b for a, b in zip(tabs[g.left], tabs[g.right])]
            elif isinstance(g, (Box, Stit, StitAgt)):
                tag = "box" if isinstance(g, Box) else "agt" if isinstance(g, StitAgt) else g.agent
                sub = tabs[g.sub]
                v = []
                for t in range(T):
                    e = sub[t]
                    acc = 0
                    for cls in set(self.classes(tag, t)):
                        if cls & ~e == 0:
                            acc |= cls
                    v.append(acc)
            elif isinstance(g, Ought):
                sub = tabs[g.sub]
                v = []
                for t in range(T):
                    e = sub[t]
                    acc = 0
                    for k, succ in enumerate(self.ought_masks(g.agent, t)):
                        if succ & ~e == 0:
                            acc |= 1 << k
                    v.append(acc)
            elif isinstance(g, Next):
                sub = tabs[g.sub]
                v = [sub[nxt[t]] for t in range(T)]
            elif isinstance(g, Until):
                goal, hold = tabs[g.left], tabs[g.right]
                v = list(goal)
                changed = True
                while changed:
                    changed = False
                    for t in range(T - 1, -1, -1):
                        w = v[t] | (hold[t] & v[nxt[t]])
                        if w != v[t]:
                            v[t] = w
                            changed = True
            else:
                raise TypeError(f"unknown node {g!r}")
            tabs[g] = v
            memo[("table", g)] = v
        return tabs[f]

    def eval_at(self, k: int, t: int, f: Formula) -> bool:
        return bool(self.table(f)[self.norm_time(t)] >> k & 1)

    def holds_everywhere(self, f: Formula, horizon: Optional[int] = None) -> bool:
        """``f`` true at every point with ``t <= horizon`` (default: the audit window)."""
        horizon = self.horizon if horizon is None else horizon
        full = (1 << len(self)) - 1
        tab = self.table(f)
        return all(tab[self.norm_time(t)] == full for t in range(horizon + 1))


def eval_at(sys: InterpretedSystem, h: int, t: int, f: Formula) -> bool:
    return sys.eval_at(h, t, f)


# audit ---------------------------------------------------------------------------

def audit_window(sys: InterpretedSystem, super_additive: bool = False) -> AuditReport:
    """Check (D0)-(D8) at every time ``t <= sys.horizon``.

    With ``super_additive=True``, (D3) is relaxed to (D3*).  (D0) holds by
    construction: relations are only ever indexed by a single time.
    """
    rep = AuditReport()
    n = len(sys)
    agents = range(1, sys.agents + 1)
    lab = sys.label
    for t in range(sys.horizon + 1):
        box = sys.classes("box", t)
        stit = {i: sys.classes(i, t) for i in agents}
        agt = sys.classes("agt", t)
        for i in agents:
            for k in range(n):
                bad = stit[i][k] & ~box[k]
                if bad:
                    rep.add("D1", (t, lab(k), lab(_bits(bad)[0])), i)
        for M in sorted(set(box)):
            acts = [sorted({stit[i][k] for k in _bits(M)}) for i in agents]
            for choice in itertools.product(*acts):
                inter = M
                for a in choice:
                    inter &= a
                if not inter:
                    rep.add("D2", (t, *(lab(_bits(a)[0]) for a in choice)))
        for k in range(n):
            meet = box[k]
            for i in agents:
                meet &= stit[i][k]
            if agt[k] & ~meet:
                rep.add("D3*", (t, lab(k), lab(_bits(agt[k] & ~meet)[0])))
            elif not super_additive and meet & ~agt[k]:
                rep.add("D3", (t, lab(k), lab(_bits(meet & ~agt[k])[0])))
        if t < sys.horizon:
            box_next = sys.classes("box", t + 1)
            for k in range(n):
                bad = box_next[k] & ~agt[k]
                if bad:
                    rep.add("D4", (t, lab(k), lab(_bits(bad)[0])))
        for i in agents:
            succ = sys.ought_masks(i, t)
            stit_classes = set(stit[i])
            for k in range(n):
                if succ[k] & ~box[k]:
                    rep.add("D5", (t, lab(k), lab(_bits(succ[k] & ~box[k])[0])), i)
                if not succ[k]:
                    rep.add("D6", (t, lab(k)), i)
                for c in stit_classes:
                    if c & succ[k] and c & ~succ[k]:
                        k2 = _bits(c & succ[k])[0]
                        rep.add("D7", (t, lab(k), lab(k2), lab(_bits(c & ~succ[k])[0])), i)
            for M in set(box):
                members = _bits(M)
                if len({succ[k] for k in members}) > 1:
                    for k in members:
                        for k2 in members:
                            bad = succ[k2] & ~succ[k]
                            if bad:
                                rep.add("D8", (t, lab(k), lab(k2), lab(_bits(bad)[0])), i)
                                break
    return rep


def is_strictly_super_additive(sys: InterpretedSystem) -> bool:
    """Some window point has an Agt-class strictly inside the meet of the [i]-classes."""
    for t in range(sys.horizon + 1):
        box = sys.classes("box", t)
        agt = sys.classes("agt", t)
        for k in range(len(sys)):
            meet = box[k]
            for i in range(1, sys.agents + 1):
                meet &= sys.classes(i, t)[k]
            if meet != agt[k]:
                return True
    return False


class ExplicitSystem(InterpretedSystem):
    """A system given by explicit per-time relations over histories ``0..n-1``.

    ``frames[t]`` describes time ``t`` with keys ``box``, ``agt`` (lists of
    blocks), ``stit`` (agent -> blocks), ``ought`` (agent -> list of
    ``[h, h']`` pairs) and ``atoms`` (name -> histories).  Times past the last
    frame repeat the frames from ``loop_from`` on.
    """

    def __init__(self, n: int, agents: int, frames: Sequence[dict], horizon: int, loop_from: Optional[int] = None):
        if not frames:
            raise MalformedModelError("an explicit system needs at least one frame")
        self.n, self.agents, self.horizon = n, agents, horizon
        self.frames = list(frames)
        loop_from = len(frames) - 1 if loop_from is None else loop_from
        self._period = (loop_from, len(frames) - loop_from)

    def __len__(self):
        return self.n

    def period(self):
        return self._period

    def _frame(self, t):
        return self.frames[self.norm_time(t)]

    def _keys(self, tag, t):
        fr = self._frame(t)
        blocks = fr["box"] if tag == "box" else fr["agt"] if tag == "agt" else fr["stit"][tag]
        key = [None] * self.n
        for j, blk in enumerate(blocks):
            for k in blk:
                if key[k] is not None:
                    raise MalformedModelError(f"history {k} in two blocks at time {t}")
                key[k] = j
        if None in key:
            raise MalformedModelError(f"blocks at time {t} do not cover every history")
        return key

    def _ought_mask(self, agent, k, t):
        return sum(1 << b for a, b in self._frame(t)["ought"][agent] if a == k)

    def _atom(self, name, t):
        return sum(1 << k for k in self._frame(t).get("atoms", {}).get(name, ()))


# lasso histories ---------------------------------------------------------------

@dataclass(frozen=True)
class LassoHistory:
    """``stem`` followed by ``loop`` repeated forever (state indices of a premodel)."""

    stem: tuple[int, ...]
    loop: tuple[int, ...]

    def __post_init__(self):
        if not self.loop:
            raise ValueError("loop must be non-empty")
        if not self.stem:
            raise ValueError("stem must be non-empty")

    def state_at(self, t: int) -> int:
        if t < len(self.stem):
            return self.stem[t]
        return self.loop[(t - len(self.stem)) % len(self.loop)]

    def prefix(self, n: int) -> list[int]:
        return [self.state_at(t) for t in range(n)]

    def normalized(self) -> "LassoHistory":
        loop = self.loop
        for d in range(1, len(loop) + 1):
            if len(loop) % d == 0 and loop == loop[:d] * (len(loop) // d):
                loop = loop[:d]
                break
        stem = self.stem
        while len(stem) > 1 and stem[-1] == loop[-1]:
            stem = stem[:-1]
            loop = (loop[-1],) + loop[:-1]
        return LassoHistory(stem, loop)

    def names(self, m: Premodel) -> dict:
        return {"stem": [m.states[s] for s in self.stem], "loop": [m.states[s] for s in self.loop]}


class LassoSystem(InterpretedSystem):
    """Histories are lassos through a premodel; relations are induced as in the unravelling.

    ``(h,t) R_box (h',t)`` iff ``h(t) R_box h'(t)`` and ``h(t'') R_Agt h'(t'')``
    for all ``t'' < t``; the other relations additionally require the
    premodel relation between ``h(t)`` and ``h'(t)``.
    """

    def __init__(self, base: Premodel, histories: Iterable[LassoHistory], horizon: int):
        self.base = base
        self.histories = [h.normalized() for h in histories]
        if not self.histories:
            raise MalformedModelError("a lasso system needs at least one history")
        if horizon < 0:
            raise ValueError("horizon must be non-negative")
        self.horizon = horizon
        self.agents = base.agents
        for h in self.histories:
            seq = list(h.stem) + list(h.loop) + [h.loop[0]]
            for a, b in zip(seq, seq[1:]):
                if not base.next_succ[a] >> b & 1:
                    raise MalformedModelError(
                        f"{base.states[a]} -> {base.states[b]} is not a transition of the premodel")
        stem = max(len(h.stem) for h in self.histories)
        length = 1
        for h in self.histories:
            length = math.lcm(length, len(h.loop))
        if stem + 2 * length > MAX_TIMELINE:
            raise ResourceError(f"period {length} too long to tabulate")
        self._period = (max(stem + length, horizon + 1), length)
        self._agree = self._agreement_ids(self._period[0] + length)

    def __len__(self):
        return len(self.histories)

    def period(self):
        return self._period

    def _agreement_ids(self, T: int) -> list[list[int]]:
        agt_of = self.base.agt_of
        ids = [[0] * len(self.histories)]
        for t in range(T):
            keys = [(ids[t][k], agt_of[h.state_at(t)]) for k, h in enumerate(self.histories)]
            canon: dict = {}
            ids.append([canon.setdefault(key, len(canon)) for key in keys])
        return ids

    def point(self, k: int, t: int) -> int:
        return self.histories[k].state_at(t)

    def _keys(self, tag, t):
        m = self.base
        out = []
        for k, h in enumerate(self.histories):
            s = h.state_at(t)
            key = (self._agree[t][k], m.box_of[s])
            if tag == "agt":
                key += (m.agt_of[s],)
            elif tag != "box":
                key += (m.stit_of[tag][s],)
            out.append(key)
        return out

    def at_states(self, states: int, t: int) -> int:
        """Histories whose state at time ``t`` lies in the ``states`` mask."""
        memo = self._cache()
        key = ("at", t)
        if key not in memo:
            where = [0] * self.base.n
            for k, h in enumerate(self.histories):
                where[h.state_at(t)] |= 1 << k
            memo[key] = where
        mask = 0
        for s in _bits(states):
            mask |= memo[key][s]
        return mask

    def _ought_mask(self, agent, k, t):
        succ = self.base.ought_succ[agent][self.point(k, t)]
        return self.classes("box", t)[k] & self.at_states(succ, t)

    def _atom(self, name, t):
        return self.at_states(self.base.atom_mask(name), t)

    def to_dict(self, base_ref: Optional[str] = None) -> dict:
        return {
            "premodel": base_ref if base_ref is not None else self.base.to_dict(),
            "horizon": self.horizon,
            "histories": [h.names(self.base) for h in self.histories],
        }

    @classmethod
    def from_dict(cls, d: dict, root: Union[str, Path, None] = None) -> "LassoSystem":
        ref = d.get("premodel", d.get("base"))
        if isinstance(ref, str):
            path = Path(ref)
            if root is not None and not path.is_absolute():
                path = Path(root) / path
            with open(path) as fh:
                base = Premodel.from_dict(json.load(fh))
        elif isinstance(ref, dict):
            base = Premodel.from_dict(ref)
        else:
            raise MalformedModelError("lasso file needs a premodel object or path")
        hs = [LassoHistory(tuple(base.idx(s) for s in h["stem"]), tuple(base.idx(s) for s in h["loop"]))
              for h in d["histories"]]
        return cls(base, hs, int(d.get("horizon", 0)))


def load_lasso(path: Union[str, Path]) -> LassoSystem:
    with open(path) as fh:
        return LassoSystem.from_dict(json.load(fh), root=Path(path).parent)


def dump_lasso(sys: LassoSystem, path: Union[str, Path], base_ref: Optional[str] = None) -> None:
    with open(path, "w") as fh:
        json.dump(sys.to_dict(base_ref), fh, indent=2)
        fh.write("\n")
