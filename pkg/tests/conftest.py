import random
import sys
from pathlib import Path

import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from dtds.premodel import Premodel  # noqa: E402
from dtds.syntax import (  # noqa: E402
    And, Atom, BOTTOM, Box, Next, Not, Ought, Stit, StitAgt, TOP, Until,
)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def formulas(atoms=("p", "q"), agents=2, max_leaves=8):
    leaves = st.sampled_from([Atom(a) for a in atoms] + [TOP, BOTTOM])

    def extend(children):
        agent = st.integers(1, agents)
        return st.one_of(
            children.map(Not),
            st.builds(And, children, children),
            children.map(Box),
            st.builds(Stit, agent, children),
            children.map(StitAgt),
            st.builds(Ought, agent, children),
            children.map(Next),
            st.builds(Until, children, children),
        )

    return st.recursive(leaves, extend, max_leaves=max_leaves)


@pytest.fixture
def rng():
    return random.Random(1234)


def two_state_model():
    """A small valid premodel used across tests."""
    return Premodel(
        ["a", "b"], 1,
        box=[["a", "b"]], stit={1: [["a"], ["b"]]}, agt=[["a"], ["b"]],
        ought={1: [("a", "a"), ("b", "a")]},
        next=[("a", "a"), ("a", "b"), ("b", "a"), ("b", "b")],
        valuation={"p": ["a"]},
    )


def super_additive_model():
    """Five states, one moment; Agt splits the cell {a, e} that both agents' actions share."""
    S = "abcde"
    everything = [(x, y) for x in S for y in S]
    return Premodel(
        list(S), 2,
        box=[list(S)],
        stit={1: [["a", "b", "e"], ["c", "d"]], 2: [["a", "c", "e"], ["b", "d"]]},
        agt=[[x] for x in S],
        ought={1: everything, 2: everything},
        next=everything,
        valuation={"p": ["a"], "q": ["e", "b"]},
    )
