"""ROVER-style fusion: fold hypotheses into a word transition network, then vote."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import EmptyInput

__all__ = ["NULL", "TokenSequence", "Slot", "WordTransitionNetwork", "tokenize", "align_wtn", "rover"]

NULL = "@"


def tokenize(text: str, unit: str = "char") -> list[str]:
    """Split text into ROVER tokens: single characters or whitespace words."""
    if unit == "char":
        return [c for c in text if not c.isspace()]
    if unit == "word":
        return text.split()
    raise ValueError(f"unknown token unit {unit!r}")


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    system_weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if NULL in self.tokens:
            raise ValueError(f"token {NULL!r} is reserved for the null arc")
        if not self.system_weight > 0:
            raise ValueError("system weight must be positive")


@dataclass
class Slot:
    weights: dict[str, float] = field(default_factory=dict)
    # token -> indices of the systems that put it in this slot, in fold order
    members: dict[str, list[int]] = field(default_factory=dict)

    def add(self, token: str, weight: float, systems):
        self.weights[token] = self.weights.get(token, 0.0) + weight
        self.members.setdefault(token, []).extend(systems)

    def copy(self) -> "Slot":
        return Slot(dict(self.weights), {k: list(v) for k, v in self.members.items()})

    def winner(self) -> str:
        return min(self.weights, key=lambda t: (-round(self.weights[t], 12), self.members[t][0], t))


@dataclass
class WordTransitionNetwork:
    slots: list[Slot] = field(default_factory=list)
    n_systems: int = 0
    total_weight: float = 0.0

    def paths(self) -> list[list[str]]:
        """The token (or NULL) each system placed in every slot."""
        out = [[NULL] * len(self.slots) for _ in range(self.n_systems)]
        for i, slot in enumerate(self.slots):
            for tok, systems in slot.members.items():
                for k in systems:
                    out[k][i] = tok
        return out


def align_wtn(base: WordTransitionNetwork, nxt: TokenSequence) -> WordTransitionNetwork:
    """Align ``nxt`` against the slots of ``base`` and add its votes.

    Unit-cost DP: a token already present in a slot matches for free, any
    other pairing costs 1, as do skipping a slot (the new system votes NULL
    there) and inserting a token (a new slot where earlier systems vote NULL).
    Equal-cost moves are resolved match/substitute, then delete, then insert.
    """
    slots, toks = base.slots, nxt.tokens
    n, m = len(slots), len(toks)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        present = slots[i - 1].weights
        for j in range(1, m + 1):
            sub = 0 if present.get(toks[j - 1], 0.0) > 0 else 1
            cost[i][j] = min(cost[i - 1][j - 1] + sub, cost[i - 1][j] + 1, cost[i][j - 1] + 1)

    moves = []
    i, j = n, m
    while i or j:
        if i and j:
            sub = 0 if slots[i - 1].weights.get(toks[j - 1], 0.0) > 0 else 1
            if cost[i][j] == cost[i - 1][j - 1] + sub:
                moves.append(("sub", i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        if i and cost[i][j] == cost[i - 1][j] + 1:
            moves.append(("del", i - 1, None))
            i -= 1
        else:
            moves.append(("ins", None, j - 1))
            j -= 1
    moves.reverse()

    system = base.n_systems
    w = nxt.system_weight
    new_slots = []
    for kind, si, tj in moves:
        if kind == "ins":
            slot = Slot()
            if system:
                slot.add(NULL, base.total_weight, range(system))
            slot.add(toks[tj], w, [system])
        else:
            slot = slots[si].copy()
            slot.add(toks[tj] if kind == "sub" else NULL, w, [system])
        new_slots.append(slot)
    return WordTransitionNetwork(new_slots, system + 1, base.total_weight + w)


def rover(sequences: list[TokenSequence]) -> list[str]:
    """Fold sequences into a WTN in the given order and take each slot's vote.

    Highest accumulated weight wins; ties go to the token first contributed
    by the earliest system, then lexicographic order. NULL winners are dropped.
    """
    if not sequences:
        raise EmptyInput("ROVER needs at least one hypothesis")
    wtn = WordTransitionNetwork()
    for seq in sequences:
        wtn = align_wtn(wtn, seq)
    out = []
    for slot in wtn.slots:
        tok = slot.winner()
        if tok != NULL:
            out.append(tok)
    return out
