"""Slow reference implementations used to cross-check the library.

They work from the JSON form of a premodel and the raw lasso sequences, and
follow the satisfaction clauses literally (explicit paths, explicit history
comparisons) without bitmasks or fixpoints.
"""
import itertools
import math

from dtds.syntax import And, Atom, Bottom, Box, Next, Not, Ought, Stit, StitAgt, Top, Until


class PlainModel:
    def __init__(self, d):
        self.states = list(d["states"])
        self.agents = d["agents"]

        def rel_of_partition(blocks):
            return {(a, b) for blk in blocks for a in blk for b in blk}

        self.box = rel_of_partition(d["box"])
        self.stit = {i: rel_of_partition(d[f"stit_{i}"]) for i in range(1, self.agents + 1)}
        self.agt = rel_of_partition(d["agt"])
        self.ought = {i: {tuple(e) for e in d[f"ought_{i}"]} for i in range(1, self.agents + 1)}
        self.next = {tuple(e) for e in d["next"]}
        self.val = {p: set(v) for p, v in d["valuation"].items()}

    def succ(self, rel, s):
        return [t for t in self.states if (s, t) in rel]


def premodel_eval(m: PlainModel, s, f) -> bool:
    if isinstance(f, Atom):
        return s in m.val.get(f.name, ())
    if isinstance(f, Top):
        return True
    if isinstance(f, Bottom):
        return False
    if isinstance(f, Not):
        return not premodel_eval(m, s, f.sub)
    if isinstance(f, And):
        return premodel_eval(m, s, f.left) and premodel_eval(m, s, f.right)
    if isinstance(f, (Box, Stit, StitAgt, Ought, Next)):
        rel = {Box: lambda: m.box, StitAgt: lambda: m.agt, Next: lambda: m.next,
               Stit: lambda: m.stit[f.agent], Ought: lambda: m.ought[f.agent]}[type(f)]()
        return all(premodel_eval(m, t, f.sub) for t in m.succ(rel, s))
    if isinstance(f, Until):
        return any(True for _ in _until_paths(m, s, f))
    raise TypeError(f)


def _until_paths(m: PlainModel, s, f):
    """Paths s = s0 -> ... -> sk (k < |S|) with the goal at sk and the hold condition before."""
    n = len(m.states)

    def dfs(path):
        here = path[-1]
        if premodel_eval(m, here, f.left):
            yield list(path)
            return
        if len(path) >= n or not premodel_eval(m, here, f.right):
            return
        for t in m.succ(m.next, here):
            path.append(t)
            yield from dfs(path)
            path.pop()

    yield from dfs([s])


class PlainLasso:
    """Lasso system evaluated straight from the definitions."""

    def __init__(self, base_dict, histories, horizon=None):
        self.m = PlainModel(base_dict)
        self.hs = [(list(st), list(lp)) for st, lp in histories]
        self.stem = max(len(st) for st, _ in self.hs)
        self.period = 1
        for _, lp in self.hs:
            self.period = math.lcm(self.period, len(lp))
        self.settle = self.stem + self.period

    def at(self, k, t):
        st, lp = self.hs[k]
        return st[t] if t < len(st) else lp[(t - len(st)) % len(lp)]

    def box_rel(self, k, k2, t):
        if (self.at(k, t), self.at(k2, t)) not in self.m.box:
            return False
        return all((self.at(k, u), self.at(k2, u)) in self.m.agt for u in range(t))

    def related(self, f, k, k2, t):
        if not self.box_rel(k, k2, t):
            return False
        pair = (self.at(k, t), self.at(k2, t))
        if isinstance(f, Box):
            return True
        if isinstance(f, Stit):
            return pair in self.m.stit[f.agent]
        if isinstance(f, StitAgt):
            return pair in self.m.agt
        return pair in self.m.ought[f.agent]

    def eval(self, k, t, f) -> bool:
        if isinstance(f, Atom):
            return self.at(k, t) in self.m.val.get(f.name, ())
        if isinstance(f, Top):
            return True
        if isinstance(f, Bottom):
            return False
        if isinstance(f, Not):
            return not self.eval(k, t, f.sub)
        if isinstance(f, And):
            return self.eval(k, t, f.left) and self.eval(k, t, f.right)
        if isinstance(f, Next):
            return self.eval(k, t + 1, f.sub)
        if isinstance(f, (Box, Stit, StitAgt, Ought)):
            return all(self.eval(k2, t, f.sub) for k2 in range(len(self.hs)) if self.related(f, k, k2, t))
        if isinstance(f, Until):
            # past max(t, settle) + period every point repeats an earlier one
            for t2 in range(t, max(t, self.settle) + self.period + 1):
                if self.eval(k, t2, f.left):
                    return True
                if not self.eval(k, t2, f.right):
                    return False
            return False
        raise TypeError(f)


def choice_property(table, x_size, i_size) -> bool:
    """Every agent, whatever it picks, leaves every outcome reachable by the others."""
    for i in range(i_size):
        for x in range(x_size):
            outcomes = {table[p] for p in itertools.product(range(x_size), repeat=i_size) if p[i] == x}
            if outcomes != set(range(x_size)):
                return False
    return True


def relation_pairs(blocks_or_succ, n, kind):
    if kind == "partition":
        return {(a, b) for blk in blocks_or_succ for a in blk for b in blk}
    return {(a, b) for a in range(n) for b in range(n) if blocks_or_succ[a] >> b & 1}


def compose(r1, r2):
    return {(a, c) for (a, b) in r1 for (b2, c) in r2 if b == b2}
