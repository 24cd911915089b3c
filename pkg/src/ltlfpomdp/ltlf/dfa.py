"""Deterministic finite automata with symbolic guards."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import EmptyTrace, IncompleteDfa
from .guards import Guard, partition_ok


@dataclass(frozen=True)
class Dfa:
    """Complete DFA over the alphabet ``2^atoms``.

    ``edges[q]`` is a tuple of ``(Guard, target)`` whose guards partition the
    letters; letters are bitsets over ``atoms``.
    """

    atoms: tuple[str, ...]
    initial: int
    accepting: frozenset
    edges: tuple

    @property
    def n_states(self) -> int:
        return len(self.edges)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def states(self) -> range:
        return range(self.n_states)

    def is_accepting(self, q: int) -> bool:
        return q in self.accepting

    def step(self, q: int, letter: int) -> int:
        for guard, target in self.edges[q]:
            if guard(letter):
                return target
        raise IncompleteDfa(f"no edge from state {q} matches letter {letter:#b}")

    def run(self, word: Sequence[int], q: int | None = None) -> int:
        q = self.initial if q is None else q
        for letter in word:
            q = self.step(q, int(letter))
        return q

    def accepts(self, word: Sequence[int]) -> bool:
        if len(word) == 0:
            raise EmptyTrace("the empty word is outside the LTLf domain")
        return self.run(word) in self.accepting

    def letter_table(self, letters: np.ndarray) -> np.ndarray:
        """``out[q, j] = step(q, letters[j])``, computed per guard."""
        letters = np.asarray(letters, dtype=np.int64)
        out = np.full((self.n_states, letters.size), -1, dtype=np.int64)
        for q, row in enumerate(self.edges):
            for guard, target in row:
                out[q, guard.evaluate(letters)] = target
        if (out < 0).any():
            q, j = np.argwhere(out < 0)[0]
            raise IncompleteDfa(f"no edge from state {q} matches letter {int(letters[j]):#b}")
        return out

    def accepts_words(self, words: np.ndarray) -> np.ndarray:
        """Vectorized acceptance of equal-length words (shape ``(M, n)``)."""
        words = np.asarray(words, dtype=np.int64)
        if words.shape[1] == 0:
            raise EmptyTrace("the empty word is outside the LTLf domain")
        if self.n_atoms <= 12:
            # whole alphabet is small: index letters directly
            inv = words & ((1 << self.n_atoms) - 1)
            table = self.letter_table(np.arange(1 << self.n_atoms))
        else:
            letters, inv = np.unique(words, return_inverse=True)
            inv = inv.reshape(words.shape)
            table = self.letter_table(letters)
        q = np.full(words.shape[0], self.initial, dtype=np.int64)
        for i in range(words.shape[1]):
            q = table[q, inv[:, i]]
        acc = np.zeros(self.n_states, dtype=bool)
        acc[list(self.accepting)] = True
        return acc[q]

    def check(self) -> None:
        """Raise IncompleteDfa unless every state's guards partition the letters."""
        for q, row in enumerate(self.edges):
            if not partition_ok([g for g, _ in row]):
                raise IncompleteDfa(f"guards at state {q} do not partition the alphabet")
            for _, t in row:
                if not 0 <= t < self.n_states:
                    raise IncompleteDfa(f"edge from {q} to missing state {t}")

    def reachable(self) -> list[int]:
        seen = {self.initial}
        order = [self.initial]
        queue = deque([self.initial])
        while queue:
            q = queue.popleft()
            for _, t in self.edges[q]:
                if t not in seen:
                    seen.add(t)
                    order.append(t)
                    queue.append(t)
        return order

    def sink_states(self) -> list[int]:
        """Non-accepting states with only self loops."""
        return [
            q for q in self.states
            if q not in self.accepting and all(t == q for _, t in self.edges[q])
        ]


def make_dfa(atoms, initial, accepting, edges) -> Dfa:
    """Build a Dfa, merging parallel edges and sorting guards canonically."""
    rows = []
    for row in edges:
        by_target: dict[int, Guard] = {}
        for g, t in row:
            by_target[t] = by_target[t] | g if t in by_target else g
        rows.append(tuple(sorted(((g, t) for t, g in by_target.items() if not g.is_false),
                                 key=lambda e: e[0].sort_key)))
    return Dfa(tuple(atoms), int(initial), frozenset(int(q) for q in accepting), tuple(rows))


def canonical(d: Dfa) -> Dfa:
    """Drop unreachable states and renumber in BFS order over sorted guards."""
    new_id = {d.initial: 0}
    order = [d.initial]
    queue = deque([d.initial])
    while queue:
        q = queue.popleft()
        for _, t in d.edges[q]:
            if t not in new_id:
                new_id[t] = len(order)
                order.append(t)
                queue.append(t)
    edges = [[(g, new_id[t]) for g, t in d.edges[q]] for q in order]
    accepting = [new_id[q] for q in order if q in d.accepting]
    return make_dfa(d.atoms, 0, accepting, edges)


def minimize(d: Dfa) -> Dfa:
    """Minimal complete DFA for the same language.

    Unreachable states are dropped, then states are split by symbolic Moore
    refinement: two states stay together while, for every target block, the
    union of guards leading into that block agrees.
    """
    reach = d.reachable()
    block = {q: int(q in d.accepting) for q in reach}
    n_blocks = len(set(block.values()))
    while True:
        sigs = {}
        new_block = {}
        for q in reach:
            into: dict[int, Guard] = {}
            for g, t in d.edges[q]:
                b = block[t]
                into[b] = into[b] | g if b in into else g
            sig = (block[q], frozenset(into.items()))
            new_block[q] = sigs.setdefault(sig, len(sigs))
        block = new_block
        if len(sigs) == n_blocks:
            break
        n_blocks = len(sigs)
    rep = {}
    for q in reach:
        rep.setdefault(block[q], q)
    edges = [[(g, block[t]) for g, t in d.edges[q]] for q in rep.values()]
    accepting = [b for b, q in rep.items() if q in d.accepting]
    return canonical(make_dfa(d.atoms, block[d.initial], accepting, edges))
