"""Constructions between premodels and interpreted systems.

* ``make_acceptable`` / ``unravel``: premodel -> lasso system
* ``filtrate``: premodel -> finite premodel over a closure set
* ``to_additive``: super-additive system -> additive system with a p-morphism
* ``check_pmorphism``: verify the back-and-forth conditions on a time window
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from .lasso import (
    InterpretedSystem, LassoHistory, LassoSystem, ResourceError, audit_window,
)
from .premodel import InvalidModelError, MalformedModelError, Premodel, _bits, audit
from .syntax import Atom, ClosureSet, Formula, closure, modal_reach


# choice functions ------------------------------------------------------------------

@dataclass(frozen=True)
class ChoiceFunction:
    """A map ``X^I -> X`` with ``X = range(x_size)`` and ``I = range(i_size)``.

    For every agent and every value that agent picks, the others can still
    steer the outcome to any element of ``X``.
    """

    x_size: int
    i_size: int

    def __call__(self, profile: Sequence[int]) -> int:
        m, n = self.x_size, self.i_size
        if len(profile) != n:
            raise ValueError(f"expected {n} values, got {len(profile)}")
        if m == 1:
            return 0
        if n == 2:
            return (profile[0] + profile[1]) % m
        # all but at most one agree: take the majority value, else the first agent's
        counts: dict[int, int] = {}
        for x in profile:
            counts[x] = counts.get(x, 0) + 1
        for x, c in counts.items():
            if c >= n - 1:
                return x
        return profile[0]

    def table(self) -> dict[tuple[int, ...], int]:
        return {p: self(p) for p in itertools.product(range(self.x_size), repeat=self.i_size)}


def build_choice(x_size: int, i_size: int) -> ChoiceFunction:
    if x_size < 1:
        raise ValueError("x_size must be positive")
    if i_size < 2 and x_size > 1:
        raise ValueError("a choice function with a single agent only exists for |X| = 1")
    if i_size < 1:
        raise ValueError("i_size must be positive")
    return ChoiceFunction(x_size, i_size)


def choice_property_holds(F: ChoiceFunction) -> bool:
    """Brute-force check of the steering property."""
    X = range(F.x_size)
    for i in range(F.i_size):
        for x in X:
            hit = set()
            for rest in itertools.product(X, repeat=F.i_size - 1):
                prof = rest[:i] + (x,) + rest[i:]
                hit.add(F(prof))
            if hit != set(X):
                return False
    return True


# acceptable histories --------------------------------------------------------------

def _as_closure(sigma, agent_count: int) -> ClosureSet:
    if isinstance(sigma, ClosureSet):
        return sigma
    if isinstance(sigma, Formula):
        return closure(sigma, agent_count)
    return closure(list(sigma), agent_count)


class _Guide:
    """Per-premodel data for steering towards pending eventualities."""

    def __init__(self, m: Premodel, sigma: ClosureSet):
        self.m = m
        self.untils = sigma.untils()
        self.holds = [m.extension(u) for u in self.untils]
        self.goal = [m.extension(u.left) for u in self.untils]
        self.dist = [self._distances(m.extension(u.left), m.extension(u.right)) for u in self.untils]

    def _distances(self, goal: int, hold: int) -> list[Optional[int]]:
        m = self.m
        dist: list[Optional[int]] = [None] * m.n
        layer = goal
        reached = goal
        d = 0
        while layer:
            for s in _bits(layer):
                dist[s] = d
            d += 1
            layer = 0
            for s in _bits(hold & ~reached):
                if m.next_succ[s] & reached:
                    layer |= 1 << s
            reached |= layer
        return dist

    def pending(self, s: int) -> list[int]:
        return [j for j in range(len(self.untils))
                if self.holds[j] >> s & 1 and not self.goal[j] >> s & 1]

    def step(self, s: int, focus: int) -> tuple[int, int]:
        pend = self.pending(s)
        succ = _bits(self.m.next_succ[s])
        if not succ:
            raise InvalidModelError(audit(self.m))
        if not pend:
            return succ[0], focus
        k = len(self.untils)
        j = min(pend, key=lambda j: (j - focus) % k)
        dist = self.dist[j]
        best = min((x for x in succ if dist[x] is not None), key=lambda x: (dist[x], x), default=None)
        if best is None:
            # the eventuality is unfulfillable: the premodel violates UFix for it
            raise ValueError(f"until formula {self.untils[j]} cannot be fulfilled from state {self.m.states[s]}")
        return best, j


def make_acceptable(m: Premodel, start: Union[str, int], sigma, prefix: Sequence[int] = (),
                    _guide: Optional[_Guide] = None) -> LassoHistory:
    """A lasso from ``start`` that fulfils every until formula of ``sigma`` it passes.

    The walk is a deterministic function of (state, focus) where the focus
    rotates through the pending until formulas, so it closes once a
    configuration repeats.  ``prefix`` (state indices) is prepended unchanged.
    """
    guide = _guide or _Guide(m, _as_closure(sigma, m.agents))
    s = m.idx(start)
    seen: dict[tuple[int, int], int] = {}
    path: list[int] = []
    config = (s, 0)
    while config not in seen:
        seen[config] = len(path)
        path.append(config[0])
        config = guide.step(*config)
    q = seen[config]
    stem = tuple(prefix) + tuple(path[:q])
    loop = tuple(path[q:])
    if not stem:
        stem, loop = (loop[0],), loop[1:] + loop[:1]
    return LassoHistory(stem, loop).normalized()


def unravel(m: Premodel, sigma, seeds: Optional[Iterable] = None, horizon: Optional[int] = None,
            max_histories: int = 2000) -> LassoSystem:
    """Build a lasso system whose histories start at ``seeds`` and cover the window.

    Coverage: for every history ``h``, time ``t <= horizon`` and state ``u``
    in the box-block of ``h(t)`` there is a history that agrees with ``h`` on
    Agt-blocks before ``t`` and sits at ``u`` at time ``t``.
    """
    rep = audit(m)
    if not rep.ok:
        raise InvalidModelError(rep)
    sigma = _as_closure(sigma, m.agents)
    guide = _Guide(m, sigma)
    seeds = range(m.n) if seeds is None else [m.idx(s) for s in seeds]
    histories: list[LassoHistory] = []
    known: set[LassoHistory] = set()

    def add(h: LassoHistory) -> bool:
        if h in known:
            return False
        if len(histories) >= max_histories:
            raise ResourceError(f"unravelling needs more than {max_histories} histories")
        known.add(h)
        histories.append(h)
        return True

    for s in seeds:
        add(make_acceptable(m, s, sigma, _guide=guide))
    if horizon is None:
        horizon = max(len(h.stem) for h in histories) + 2 * max(len(h.loop) for h in histories)

    agt_of = m.agt_of
    cover: dict[tuple[int, tuple], int] = {}

    def register(h: LassoHistory):
        key: tuple = ()
        for t in range(horizon + 1):
            s = h.state_at(t)
            cover[(t, key)] = cover.get((t, key), 0) | (1 << s)
            key = key + (agt_of[s],)

    for h in histories:
        register(h)
    k = 0
    while k < len(histories):
        h = histories[k]
        key: tuple = ()
        for t in range(horizon + 1):
            s = h.state_at(t)
            missing = m.box_block(s) & ~cover[(t, key)]
            for u in _bits(missing):
                if cover[(t, key)] >> u & 1:
                    continue  # covered by a history added for an earlier u
                chain = [u]
                for t2 in range(t - 1, -1, -1):
                    target = chain[-1]
                    w = next((w for w in _bits(m.agt_block(h.state_at(t2))) if m.next_succ[w] >> target & 1), None)
                    if w is None:
                        raise InvalidModelError(audit(m))
                    chain.append(w)
                chain.reverse()
                new = make_acceptable(m, u, sigma, prefix=chain[:-1], _guide=guide)
                add(new)
                register(new)
            key = key + (agt_of[s],)
        k += 1
    return LassoSystem(m, histories, horizon)


def transfer_failures(sys: LassoSystem, formulas: Iterable[Formula], horizon: Optional[int] = None) -> list:
    """Points where a formula's truth in the system differs from its truth at the underlying state.

    Only points with ``t + modal_reach(f) <= horizon`` are compared, which is
    where the window coverage guarantees agreement.
    """
    horizon = sys.horizon if horizon is None else horizon
    out = []
    for f in formulas:
        reach = modal_reach(f)
        last = horizon if reach is None else horizon - reach
        if last < 0:
            continue
        ext = sys.base.extension(f)
        for t in range(int(last) + 1):
            for k in range(len(sys)):
                if sys.eval_at(k, t, f) != bool(ext >> sys.point(k, t) & 1):
                    out.append((f, k, t))
    return out


# filtration ------------------------------------------------------------------------

def _components(n: int, edges: Mapping[int, int]) -> list[int]:
    """Class id of every node in the reflexive-symmetric-transitive closure of ``edges``."""
    comp = [-1] * n
    c = 0
    for start in range(n):
        if comp[start] >= 0:
            continue
        stack = [start]
        comp[start] = c
        while stack:
            x = stack.pop()
            for y in _bits(edges[x]):
                if comp[y] < 0:
                    comp[y] = c
                    stack.append(y)
        c += 1
    return comp


def filtration_classes(m: Premodel, sigma) -> list[int]:
    """Class id per state: same Σ-profile and same set of Σ-profiles in the box-block."""
    sigma = _as_closure(sigma, m.agents)
    exts = [m.extension(f) for f in sigma]
    prof = []
    for s in range(m.n):
        p = 0
        for j, e in enumerate(exts):
            if e >> s & 1:
                p |= 1 << j
        prof.append(p)
    keys = [(prof[s], frozenset(prof[x] for x in _bits(m.box_block(s)))) for s in range(m.n)]
    ids: dict = {}
    return [ids.setdefault(k, len(ids)) for k in keys]


def filtrate(m: Premodel, sigma) -> Premodel:
    """Collapse ``m`` over the closure set ``sigma``.

    Box and next are lifted existentially; the [i] and Agt relations are the
    equivalences generated by their lifts; each ought relation is its lift
    followed by the filtrated [i].  Only atoms of ``sigma`` are kept.
    """
    sigma = _as_closure(sigma, m.agents)
    cls = filtration_classes(m, sigma)
    nc = max(cls) + 1
    members = [[s for s in range(m.n) if cls[s] == c] for c in range(nc)]
    names = ["{" + ",".join(m.states[s] for s in mem) + "}" for mem in members]

    def lift(succ_of) -> list[int]:
        out = [0] * nc
        for s in range(m.n):
            for t in _bits(succ_of(s)):
                out[cls[s]] |= 1 << cls[t]
        return out

    def blocks_of(comp: list[int]) -> list[list[int]]:
        groups: dict[int, list[int]] = {}
        for c, g in enumerate(comp):
            groups.setdefault(g, []).append(c)
        return list(groups.values())

    box_lift = lift(m.box_block)
    box_comp = _components(nc, box_lift)
    for c in range(nc):
        same = sum(1 << d for d in range(nc) if box_comp[d] == box_comp[c])
        if box_lift[c] != same:
            raise AssertionError("lifted box relation is not an equivalence")
    stit_comp = {i: _components(nc, lift(lambda s, i=i: m.stit_block(i, s))) for i in range(1, m.agents + 1)}
    agt_comp = _components(nc, lift(m.agt_block))
    ought = {}
    for i in range(1, m.agents + 1):
        lifted = lift(lambda s, i=i: m.ought_succ[i][s])
        edges = []
        for c in range(nc):
            targets = set()
            for d in _bits(lifted[c]):
                targets.update(e for e in range(nc) if stit_comp[i][e] == stit_comp[i][d])
            edges.extend((names[c], names[e]) for e in sorted(targets))
        ought[i] = edges
    nxt = lift(lambda s: m.next_succ[s])
    valuation = {}
    for p in sorted(sigma.atoms()):
        val = m.atom_mask(p)
        valuation[p] = [names[c] for c in range(nc) if val >> members[c][0] & 1]
    return Premodel(
        names, m.agents,
        box=[[names[c] for c in b] for b in blocks_of(box_comp)],
        stit={i: [[names[c] for c in b] for b in blocks_of(stit_comp[i])] for i in stit_comp},
        agt=[[names[c] for c in b] for b in blocks_of(agt_comp)],
        ought=ought,
        next=[(names[c], names[d]) for c in range(nc) for d in _bits(nxt[c])],
        valuation=valuation,
    )


# additive refinement ---------------------------------------------------------------

class RefinedSystem(InterpretedSystem):
    """Histories of a base system paired with refined action profiles.

    A refined action of agent ``i`` at time ``t`` is a pair
    ``(base action mask, cell mask)``; the Agt-relation is equality of the
    whole profile, so the result is additive.
    """

    def __init__(self, base: InterpretedSystem, entries: list[tuple[int, tuple]], horizon: int, actions):
        self.base = base
        self.entries = entries
        self.agents = base.agents
        self.horizon = horizon
        self._actions = actions  # (t, base history) -> canonical profile beyond the window
        b_start, b_len = base.period()
        self._period = (max(horizon + 1, b_start) + b_len, b_len)
        self._agree = [[0] * len(entries)]
        for t in range(self._period[0] + b_len):
            keys = [(self._agree[t][g], self.profile(g, t)) for g in range(len(entries))]
            canon: dict = {}
            self._agree.append([canon.setdefault(k, len(canon)) for k in keys])

    def __len__(self):
        return len(self.entries)

    def period(self):
        return self._period

    def label(self, g):
        k, prof = self.entries[g]
        return f"{self.base.label(k)}#{g}"

    def projection(self) -> list[int]:
        return [k for k, _ in self.entries]

    def profile(self, g: int, t: int) -> tuple:
        k, prof = self.entries[g]
        if t < len(prof):
            return prof[t]
        return self._actions(self.base.norm_time(t), k)

    def _keys(self, tag, t):
        bbox = self.base.classes("box", t)
        out = []
        for g, (k, _) in enumerate(self.entries):
            key = (self._agree[t][g], bbox[k])
            if tag == "agt":
                key += (self.profile(g, t),)
            elif tag != "box":
                key += (self.profile(g, t)[tag - 1],)
            out.append(key)
        return out

    def lift(self, base_mask: int) -> int:
        """Refined histories lying over the base histories in ``base_mask``."""
        memo = self._cache()
        key = ("lift", base_mask)
        if key not in memo:
            if "fibres" not in memo:
                fibres = [0] * len(self.base)
                for g, (k, _) in enumerate(self.entries):
                    fibres[k] |= 1 << g
                memo["fibres"] = fibres
            mask = 0
            for k in _bits(base_mask):
                mask |= memo["fibres"][k]
            memo[key] = mask
        return memo[key]

    def _ought_mask(self, agent, g, t):
        succ = self.base.ought_masks(agent, t)[self.entries[g][0]]
        return self.classes("box", t)[g] & self.lift(succ)

    def _atom(self, name, t):
        return self.lift(self.base.table(Atom(name))[self.base.norm_time(t)])


class _Moments:
    """Refined action data for every moment (box class) of a base system at one time."""

    def __init__(self, sys: InterpretedSystem, t: int):
        self.box = sys.classes("box", t)
        self.stit = [sys.classes(i, t) for i in range(1, sys.agents + 1)]
        self.agt = sys.classes("agt", t)
        self.n = sys.agents
        self.cells: dict[int, list[int]] = {}
        self.F: dict[int, ChoiceFunction] = {}
        for M in set(self.box):
            cells = sorted({self.agt[k] for k in _bits(M)}, key=lambda c: _bits(c)[0])
            self.cells[M] = cells
            self.F[M] = build_choice(len(cells), self.n) if self.n > 1 else None

    def outcome(self, M: int, acts: tuple[int, ...], picks: tuple[int, ...]) -> int:
        cells = self.cells[M]
        inter = M
        for a in acts:
            inter &= a
        c = cells[self.F[M](picks)]
        if c & ~inter == 0:
            return c
        return next(c for c in cells if c & ~inter == 0)

    def refinements(self, k: int) -> list[tuple]:
        """All refined profiles whose outcome is the Agt-cell of base history ``k``."""
        M = self.box[k]
        acts = tuple(s[k] for s in self.stit)
        cells = self.cells[M]
        target = self.agt[k]
        if self.n == 1:
            if len(cells) > 1 and any(c != target and c & ~acts[0] == 0 for c in cells):
                raise ValueError("a single-agent system can only be refined when it is already additive")
            return [((acts[0], target),)]
        out = []
        for picks in itertools.product(range(len(cells)), repeat=self.n):
            if self.outcome(M, acts, picks) == target:
                out.append(tuple((a, cells[p]) for a, p in zip(acts, picks)))
        return out


def to_additive(sys: InterpretedSystem, horizon: Optional[int] = None,
                max_histories: int = 20000) -> tuple[RefinedSystem, "PMorphismWitness"]:
    """Refine a super-additive system into an additive one that maps onto it.

    Every refinement sequence up to ``horizon`` is kept; beyond it each
    history continues with its canonical (first) refinement.  The returned
    witness certifies the p-morphism on the window.
    """
    horizon = min(sys.horizon, 1) if horizon is None else horizon
    if horizon > sys.horizon:
        raise ValueError("refinement horizon exceeds the base window")
    moments: dict[int, _Moments] = {}

    def mom(t):
        t = sys.norm_time(t)
        if t not in moments:
            moments[t] = _Moments(sys, t)
        return moments[t]

    opts = [[mom(t).refinements(k) for t in range(horizon + 1)] for k in range(len(sys))]
    total = 0
    for o in opts:
        size = 1
        for x in o:
            size *= len(x)
        total += size
    if total > max_histories:
        raise ResourceError(f"additive refinement needs {total} histories (budget {max_histories})")
    entries = [(k, seq) for k in range(len(sys)) for seq in itertools.product(*opts[k])]
    canon: dict = {}

    def actions(t, k):
        if (t, k) not in canon:
            canon[(t, k)] = mom(t).refinements(k)[0]
        return canon[(t, k)]

    refined = RefinedSystem(sys, entries, horizon, actions)
    witness = check_pmorphism(refined, sys, refined.projection())
    return refined, witness


# p-morphisms -----------------------------------------------------------------------

@dataclass
class PMorphismWitness:
    mapping: list[int]
    horizon: int
    checked: dict = field(default_factory=dict)  # tag -> number of (g, t) points checked
    formulas_checked: int = 0


class PMorphismError(ValueError):
    def __init__(self, violations: dict):
        self.violations = violations
        super().__init__("; ".join(f"{tag}: {v}" for tag, v in violations.items()))


class _Induced(InterpretedSystem):
    """A system with its valuation pulled back from another one along a map."""

    def __init__(self, src: InterpretedSystem, dst: InterpretedSystem, mapping: Sequence[int]):
        self.src, self.dst, self.mapping = src, dst, mapping
        self.agents, self.horizon = src.agents, src.horizon
        s0, sl = src.period()
        d0, dl = dst.period()
        length = math.lcm(sl, dl)
        self._period = (max(s0, d0), length)

    def __len__(self):
        return len(self.src)

    def period(self):
        return self._period

    def classes(self, tag, t):
        return self.src.classes(tag, t)

    def ought_masks(self, agent, t):
        return self.src.ought_masks(agent, t)

    def _atom(self, name, t):
        base = self.dst.table(Atom(name))[self.dst.norm_time(t)]
        mask = 0
        for g, k in enumerate(self.mapping):
            if base >> k & 1:
                mask |= 1 << g
        return mask


def tag_name(tag) -> str:
    if isinstance(tag, tuple):
        return f"ought_{tag[1]}"
    return tag if isinstance(tag, str) else f"stit_{tag}"


def check_pmorphism(src: InterpretedSystem, dst: InterpretedSystem, mapping: Sequence[int],
                    horizon: Optional[int] = None, formulas: Iterable[Formula] = ()) -> PMorphismWitness:
    """Verify forth and back conditions for every relation at times ``t <= horizon``.

    Raises ``PMorphismError`` naming the first violating tuple per relation.
    With ``formulas``, also compares truth values under the pulled-back
    valuation wherever the formula's modal reach stays inside the window.
    """
    horizon = min(src.horizon, dst.horizon) if horizon is None else horizon
    mapping = list(mapping)
    if len(mapping) != len(src):
        raise ValueError("mapping must assign a target to every source history")
    if not set(mapping) <= set(range(len(dst))):
        raise ValueError("mapping has targets outside the destination system")
    violations: dict = {}
    checked: dict = {}
    for tag in src.tags():
        count = 0
        for t in range(horizon + 1):
            if isinstance(tag, tuple):
                rel_s = src.ought_masks(tag[1], t)
                rel_d = dst.ought_masks(tag[1], t)
            else:
                rel_s = src.classes(tag, t)
                rel_d = dst.classes(tag, t)
            images: dict[int, int] = {}
            for g in range(len(src)):
                image = images.get(rel_s[g])
                if image is None:
                    image = 0
                    for g2 in _bits(rel_s[g]):
                        image |= 1 << mapping[g2]
                    images[rel_s[g]] = image
                target = rel_d[mapping[g]]
                name = tag_name(tag)
                if name in violations:
                    continue
                if image & ~target:
                    bad = next(g2 for g2 in _bits(rel_s[g]) if not target >> mapping[g2] & 1)
                    violations[name] = ("forth", t, src.label(g), src.label(bad))
                elif target & ~image:
                    bad = _bits(target & ~image)[0]
                    violations[name] = ("back", t, src.label(g), dst.label(bad))
                count += 1
        checked[tag] = count
    if violations:
        raise PMorphismError(violations)
    w = PMorphismWitness(mapping, horizon, checked)
    formulas = list(formulas)
    if formulas:
        pulled = _Induced(src, dst, mapping)
        bad = {}
        for f in formulas:
            reach = modal_reach(f)
            last = horizon if reach is None else horizon - reach
            for t in range(int(last) + 1 if last >= 0 else 0):
                for g in range(len(src)):
                    if pulled.eval_at(g, t, f) != dst.eval_at(mapping[g], t, f):
                        bad.setdefault("truth", (str(f), t, src.label(g)))
            w.formulas_checked += 1
        if bad:
            raise PMorphismError(bad)
    return w
