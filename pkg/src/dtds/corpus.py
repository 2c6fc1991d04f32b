"""Bundled example formulas: Hohfeldian positions plus a broader test corpus."""
from __future__ import annotations

from .syntax import Formula, parse

# name -> (formula text, gloss)
HOHFELD = {
    "claim": ("O2 [2] p", "agent 1 has a claim against agent 2 that 2 sees to p (2's duty)"),
    "privilege": ("~O1 [1] ~p", "agent 1 is not obliged to refrain from p"),
    "power": ("dia [1] X (O1 [1] p & O2 [2] q)",
              "agent 1 can act so that next both 1 and 2 are under obligations"),
    "persistent-duty": ("U(q, O1 [1] p)", "agent 1 ought to see to p until q happens"),
    "conditional-power": ("box G ([1] r -> X O2 [2] s)",
                          "whenever 1 sees to r, 2 is obliged to see to s at the next moment"),
}

EXTRA = [
    "p", "~p", "true", "false", "p & q", "p | q", "p -> q", "p <-> q",
    "box p", "dia p", "[1] p", "[2] ~q", "[*] (p & q)", "<1> p", "<*> q",
    "O1 p", "M1 p", "O2 (p -> q)", "X p", "X X ~p", "U(p, q)", "F p", "G p", "G F p", "F G ~q",
    "box p -> [1] p",
    "dia [1] p & dia [2] q -> dia ([1] p & [2] q)",
    "[1] p & [2] q -> [*] (p & q)",
    "[*] X p -> X box p",
    "box p -> O1 p",
    "O1 p -> ~O1 ~p",
    "O1 p -> O1 [1] p",
    "O1 p -> box O1 p",
    "X p <-> ~X ~p",
    "U(p, q) <-> (p | (q & X U(p, q)))",
    "box (p -> q) -> (box p -> box q)",
    "[2] p -> [2] [2] p",
    "<1> p -> [1] <1> p",
    "O1 p & O1 ~p",
    "U(p, q) & G ~p",
    "~U(O1 p, [1] q)",
    "O1 [1] p & O2 [2] ~p",
    "box G (p -> X q)",
    "U(X p, box (q | r))",
    "[*] U(p, O2 q) -> <2> X p",
    "M2 [2] p & ~O2 [2] p",
    "G (O1 [1] p -> F [1] p)",
    "dia (X p & X ~p)",
    "~~p <-> p",
    "((p -> q) -> p) -> p",
]


def hohfeld_formulas(agent_count: int = 2) -> dict[str, Formula]:
    return {name: parse(text, agent_count) for name, (text, _) in HOHFELD.items()}


def corpus(agent_count: int = 2) -> list[Formula]:
    """Hohfeld examples followed by the extra corpus, all parsed."""
    texts = [text for text, _ in HOHFELD.values()] + EXTRA
    return [parse(t, agent_count) for t in texts]
