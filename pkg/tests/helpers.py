"""Shared generators and brute-force oracles for the test-suite."""
from __future__ import annotations

import itertools

import numpy as np

from ltlfpomdp.ltlf.syntax import (
    FALSE, TRUE, Always, And, Atom, Eventually, Next, Not, Or, Release, Until, WeakNext,
)

_UNARY = [Not, Next, WeakNext, Eventually, Always]
_BINARY = [And, Or, Until, Release]


def random_formula(rng: np.random.Generator, depth: int, n_atoms: int):
    """Random formula of depth at most ``depth`` over atoms ``0..n_atoms-1``."""
    if depth == 0 or rng.random() < 0.2:
        r = rng.random()
        if r < 0.06:
            return TRUE
        if r < 0.1:
            return FALSE
        i = int(rng.integers(n_atoms))
        return Atom(i, "abcdefgh"[i])
    if rng.random() < 0.45:
        op = _UNARY[int(rng.integers(len(_UNARY)))]
        return op(random_formula(rng, depth - 1, n_atoms))
    op = _BINARY[int(rng.integers(len(_BINARY)))]
    return op(random_formula(rng, depth - 1, n_atoms), random_formula(rng, depth - 1, n_atoms))


def all_words(n_atoms: int, length: int) -> np.ndarray:
    letters = range(1 << n_atoms)
    return np.array(list(itertools.product(letters, repeat=length)), dtype=np.int64).reshape(-1, length)


def holds(f, w, i=0) -> bool:
    """Direct recursive reading of the finite-trace satisfaction clauses."""
    n = len(w)
    if f is TRUE or f == TRUE:
        return True
    if f == FALSE:
        return False
    if isinstance(f, Atom):
        return bool(w[i] >> f.index & 1)
    if isinstance(f, Not):
        return not holds(f.arg, w, i)
    if isinstance(f, And):
        return all(holds(a, w, i) for a in f.args)
    if isinstance(f, Or):
        return any(holds(a, w, i) for a in f.args)
    if isinstance(f, Next):
        return i + 1 < n and holds(f.arg, w, i + 1)
    if isinstance(f, WeakNext):
        return i + 1 >= n or holds(f.arg, w, i + 1)
    if isinstance(f, Until):
        return any(holds(f.right, w, k) and all(holds(f.left, w, j) for j in range(i, k))
                   for k in range(i, n))
    if isinstance(f, Release):
        return not holds(Until(Not(f.left), Not(f.right)), w, i)
    if isinstance(f, Eventually):
        return any(holds(f.arg, w, j) for j in range(i, n))
    if isinstance(f, Always):
        return all(holds(f.arg, w, j) for j in range(i, n))
    raise TypeError(f)
