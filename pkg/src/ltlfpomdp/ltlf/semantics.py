"""Finite-trace semantics.

A letter is an ``int`` bitset whose bit ``i`` is the truth value of atom ``i``.
Evaluation is a backward sweep over positions, computed once per subformula,
and vectorized over a batch of equal-length words.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from ..errors import EmptyTrace
from .syntax import (
    Always,
    And,
    Atom,
    AtomTable,
    Eventually,
    Formula,
    Next,
    Not,
    Or,
    Release,
    Until,
    WeakNext,
    _Constant,
)


def to_letter(letter, atoms: AtomTable | None = None) -> int:
    """Coerce a letter given as a bitset, atom indices or atom names."""
    if isinstance(letter, (int, np.integer)):
        return int(letter)
    bits = 0
    for a in letter:
        if isinstance(a, str):
            if atoms is None:
                raise TypeError("atom names in a letter need an AtomTable")
            bits |= 1 << atoms.index(a)
        else:
            bits |= 1 << int(a)
    return bits


def eval_words(phi: Formula, words: np.ndarray) -> np.ndarray:
    """Truth of ``phi`` at position 0 of each row of ``words`` (shape ``(M, n)``)."""
    words = np.asarray(words, dtype=np.int64)
    if words.ndim != 2:
        raise ValueError("words must be a 2-d array of letters")
    if words.shape[1] == 0:
        raise EmptyTrace("LTLf formulas are evaluated on nonempty words")
    return _sweep(phi, words, {})[:, 0]


def eval_trace(phi: Formula, word: Sequence, atoms: AtomTable | None = None) -> bool:
    """``(word, 0) |= phi`` for a nonempty finite word."""
    letters = [to_letter(x, atoms) for x in word]
    if not letters:
        raise EmptyTrace("LTLf formulas are evaluated on nonempty words")
    return bool(eval_words(phi, np.array([letters], dtype=np.int64))[0])


def accepts_all(phi: Formula, words: Iterable[Sequence[int]]) -> list[bool]:
    """Evaluate ``phi`` on words of mixed lengths."""
    words = list(words)
    out = [False] * len(words)
    by_len: dict[int, list[int]] = {}
    for i, w in enumerate(words):
        by_len.setdefault(len(w), []).append(i)
    for n, idx in by_len.items():
        if n == 0:
            raise EmptyTrace("LTLf formulas are evaluated on nonempty words")
        res = eval_words(phi, np.array([words[i] for i in idx], dtype=np.int64))
        for i, r in zip(idx, res):
            out[i] = bool(r)
    return out


def _sweep(f: Formula, words: np.ndarray, memo: dict) -> np.ndarray:
    hit = memo.get(f)
    if hit is not None:
        return hit
    M, n = words.shape
    if isinstance(f, _Constant):
        v = np.full((M, n), f.value)
    elif isinstance(f, Atom):
        v = (words >> f.index) & 1 == 1
    elif isinstance(f, Not):
        v = ~_sweep(f.arg, words, memo)
    elif isinstance(f, And):
        v = _sweep(f.args[0], words, memo).copy()
        for a in f.args[1:]:
            v &= _sweep(a, words, memo)
    elif isinstance(f, Or):
        v = _sweep(f.args[0], words, memo).copy()
        for a in f.args[1:]:
            v |= _sweep(a, words, memo)
    elif isinstance(f, (Next, WeakNext)):
        c = _sweep(f.arg, words, memo)
        v = np.empty((M, n), dtype=bool)
        v[:, :-1] = c[:, 1:]
        v[:, -1] = isinstance(f, WeakNext)
    elif isinstance(f, (Eventually, Always)):
        c = _sweep(f.arg, words, memo)
        # suffix any / suffix all
        if isinstance(f, Eventually):
            v = np.logical_or.accumulate(c[:, ::-1], axis=1)[:, ::-1]
        else:
            v = np.logical_and.accumulate(c[:, ::-1], axis=1)[:, ::-1]
    elif isinstance(f, (Until, Release)):
        left = _sweep(f.left, words, memo)
        right = _sweep(f.right, words, memo)
        v = np.empty((M, n), dtype=bool)
        v[:, -1] = right[:, -1]
        if isinstance(f, Until):
            for i in range(n - 2, -1, -1):
                v[:, i] = right[:, i] | (left[:, i] & v[:, i + 1])
        else:
            for i in range(n - 2, -1, -1):
                v[:, i] = right[:, i] & (left[:, i] | v[:, i + 1])
    else:
        raise TypeError(f"not a formula: {f!r}")
    memo[f] = v
    return v
