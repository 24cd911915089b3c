"""Boolean edge guards over atomic propositions.

A guard is stored as a reduced truth table over its support: the sorted tuple
of atoms it actually depends on.  Entry ``m`` of the table is the value under
the assignment giving atom ``support[i]`` the bit ``(m >> i) & 1``.  Dropping
irrelevant atoms makes the representation canonical, so equal Boolean
functions have equal keys.
"""
from __future__ import annotations

from itertools import combinations
from typing import Sequence

import numpy as np

MAX_WIDTH = 20


def _spread(support: Sequence[int], letters: np.ndarray) -> np.ndarray:
    """Table index of each letter (bitset over global atom ids)."""
    idx = np.zeros(letters.shape, dtype=np.int64)
    for pos, atom in enumerate(support):
        idx |= ((letters >> atom) & 1) << pos
    return idx


class Guard:
    __slots__ = ("support", "table", "_key", "_hash")

    def __init__(self, support: Sequence[int], table):
        support = tuple(int(a) for a in support)
        table = np.asarray(table, dtype=bool).reshape(-1)
        if len(support) > MAX_WIDTH:
            raise ValueError(f"guard width {len(support)} exceeds {MAX_WIDTH}")
        if table.size != 1 << len(support):
            raise ValueError("truth table size does not match support")
        if list(support) != sorted(set(support)):
            order = np.argsort(support)
            support, table = _permute(support, table, order)
        support, table = _reduce(support, table)
        table.setflags(write=False)
        self.support = support
        self.table = table
        self._key = (support, np.packbits(table).tobytes(), table.size)
        self._hash = hash(self._key)

    # constructors

    @classmethod
    def const(cls, value: bool) -> "Guard":
        return cls((), [bool(value)])

    @classmethod
    def literal(cls, atom: int, positive: bool = True) -> "Guard":
        return cls((atom,), [not positive, positive])

    @classmethod
    def from_letters(cls, support: Sequence[int], letters) -> "Guard":
        """Guard true exactly on the given letters, restricted to ``support``."""
        table = np.zeros(1 << len(support), dtype=bool)
        letters = np.asarray(list(letters), dtype=np.int64)
        if letters.size:
            table[_spread(support, letters)] = True
        return cls(support, table)

    # queries

    @property
    def is_true(self) -> bool:
        return not self.support and bool(self.table[0])

    @property
    def is_false(self) -> bool:
        return not self.support and not bool(self.table[0])

    def __call__(self, letter: int) -> bool:
        m = 0
        for pos, atom in enumerate(self.support):
            m |= ((letter >> atom) & 1) << pos
        return bool(self.table[m])

    def evaluate(self, letters: np.ndarray) -> np.ndarray:
        letters = np.asarray(letters, dtype=np.int64)
        return self.table[_spread(self.support, letters)]

    def count(self, n_atoms: int) -> int:
        """Number of letters over ``n_atoms`` atoms satisfying the guard."""
        return int(self.table.sum()) << (n_atoms - len(self.support))

    # Boolean algebra

    def lift(self, support: Sequence[int]) -> np.ndarray:
        """Truth table over a superset ``support`` (sorted)."""
        m = np.arange(1 << len(support), dtype=np.int64)
        idx = np.zeros_like(m)
        for pos, atom in enumerate(self.support):
            bit = support.index(atom)
            idx |= ((m >> bit) & 1) << pos
        return self.table[idx]

    def _combine(self, other: "Guard", op) -> "Guard":
        support = tuple(sorted(set(self.support) | set(other.support)))
        return Guard(support, op(self.lift(support), other.lift(support)))

    def __and__(self, other):
        return self._combine(other, np.logical_and)

    def __or__(self, other):
        return self._combine(other, np.logical_or)

    def __invert__(self):
        return Guard(self.support, ~self.table)

    def implies(self, other: "Guard") -> bool:
        return (~self | other).is_true

    def disjoint(self, other: "Guard") -> bool:
        return (self & other).is_false

    # identity

    def __eq__(self, other):
        return isinstance(other, Guard) and self._key == other._key

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.sort_key < other.sort_key

    @property
    def sort_key(self):
        return (len(self.support), self.support, self._key[1])

    def __repr__(self):
        return f"Guard({self.to_dnf()})"

    # export

    def cubes(self) -> list[dict[int, bool]]:
        """A small irredundant DNF as a list of partial assignments."""
        if self.is_false:
            return []
        if self.is_true:
            return [{}]
        k = len(self.support)
        if k <= 10:
            raw = _quine_mccluskey(self.table, k)
        else:
            raw = _shannon_cubes(self.table, k)
        out = []
        for mask, value in raw:
            out.append({self.support[i]: bool(value >> i & 1) for i in range(k) if mask >> i & 1})
        return out

    def to_dnf(self, names: Sequence[str] | None = None) -> str:
        cubes = self.cubes()
        if not cubes:
            return "false"
        if cubes == [{}]:
            return "true"

        def name(a):
            return names[a] if names is not None else f"p{a}"

        clauses = []
        for cube in cubes:
            lits = [name(a) if v else "!" + name(a) for a, v in sorted(cube.items())]
            clauses.append(" & ".join(lits))
        return " | ".join(clauses)


def _permute(support, table, order):
    k = len(support)
    new_support = tuple(support[i] for i in order)
    m = np.arange(1 << k, dtype=np.int64)
    idx = np.zeros_like(m)
    # new position p holds old atom order[p]
    for p, old in enumerate(order):
        idx |= ((m >> p) & 1) << int(old)
    return new_support, table[idx]


def _reduce(support, table):
    support = list(support)
    pos = 0
    while pos < len(support):
        k = len(support)
        t = table.reshape((2,) * k)  # axis 0 is the highest bit
        axis = k - 1 - pos
        lo = np.take(t, 0, axis=axis)
        hi = np.take(t, 1, axis=axis)
        if np.array_equal(lo, hi):
            table = lo.reshape(-1)
            del support[pos]
        else:
            pos += 1
    return tuple(support), np.ascontiguousarray(table)


def _quine_mccluskey(table: np.ndarray, k: int) -> list[tuple[int, int]]:
    full = (1 << k) - 1
    ones = [int(m) for m in np.flatnonzero(table)]
    # implicants as (mask of fixed bits, value); start from minterms
    current = {(full, m) for m in ones}
    primes = set()
    while current:
        merged = set()
        nxt = set()
        by_mask: dict[int, set[int]] = {}
        for mask, val in current:
            by_mask.setdefault(mask, set()).add(val)
        for mask, vals in by_mask.items():
            for val in vals:
                for bit in range(k):
                    b = 1 << bit
                    if mask & b and not val & b and (val | b) in vals:
                        nxt.add((mask & ~b, val))
                        merged.add((mask, val))
                        merged.add((mask, val | b))
        primes |= current - merged
        current = nxt
    primes = sorted(primes, key=lambda c: (-_free(c[0], k), c[0], c[1]))

    def covers(c, m):
        return m & c[0] == c[1]

    # essential primes first, then greedy on remaining minterms
    remaining = set(ones)
    chosen = []
    for m in ones:
        cov = [c for c in primes if covers(c, m)]
        if len(cov) == 1 and cov[0] not in chosen:
            chosen.append(cov[0])
    for c in chosen:
        remaining -= {m for m in remaining if covers(c, m)}
    while remaining:
        best = max(primes, key=lambda c: (sum(covers(c, m) for m in remaining), _free(c[0], k)))
        chosen.append(best)
        remaining -= {m for m in remaining if covers(best, m)}
    return sorted(chosen, key=lambda c: (-_free(c[0], k), c[0], c[1]))


def _free(mask, k):
    return k - bin(mask).count("1")


def _shannon_cubes(table: np.ndarray, k: int) -> list[tuple[int, int]]:
    out = []

    def rec(t, bit, mask, val):
        if not t.any():
            return
        if t.all():
            out.append((mask, val))
            return
        # split on the highest remaining bit
        half = t.size // 2
        b = 1 << bit
        rec(t[:half], bit - 1, mask | b, val)
        rec(t[half:], bit - 1, mask | b, val | b)

    rec(table, k - 1, 0, 0)
    return out


def partition_ok(guards: Sequence[Guard]) -> bool:
    """True iff the guards are pairwise disjoint and jointly exhaustive."""
    support = tuple(sorted(set().union(*(g.support for g in guards)))) if guards else ()
    total = np.zeros(1 << len(support), dtype=np.int64)
    for g in guards:
        total += g.lift(support)
    return bool(np.all(total == 1))


def pairwise_disjoint(guards: Sequence[Guard]) -> bool:
    return all(a.disjoint(b) for a, b in combinations(guards, 2))
