"""LTLf to DFA by formula progression.

Reading a letter ``s`` turns a pending obligation ``f`` into a pair
``(end, rest)``: ``end`` says whether the word ending at ``s`` satisfies ``f``
and ``rest`` is what the remaining (nonempty) suffix must satisfy.  Automaton
states are such pairs with ``rest`` kept as a canonical monotone DNF, so equal
obligations share a state.  The raw automaton is then minimized.
"""
from __future__ import annotations

from collections import deque
from typing import Sequence

import numpy as np

from ..errors import StateBlowup
from .dfa import Dfa, make_dfa, minimize
from .guards import MAX_WIDTH, Guard
from .syntax import (
    FALSE,
    TRUE,
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
    conj,
    disj,
    normalize,
)

DEFAULT_MAX_STATES = 10_000

# An obligation is kept as a monotone DNF over "elementary" formulas (literals,
# X, WX, U, R, F, G nodes): a frozenset of clauses, each a frozenset of
# elementary formulas, with no clause containing another.  Elementary formulas
# all come from the closure of the input, so there are finitely many such DNFs
# and the construction terminates.

DNF_TRUE = frozenset([frozenset()])
DNF_FALSE = frozenset()


def _absorb(clauses) -> frozenset:
    clauses = sorted(set(clauses), key=len)
    kept: list[frozenset] = []
    for c in clauses:
        if any(k <= c for k in kept):
            continue
        lits = {e for e in c if isinstance(e, Not)}
        if any(l.arg in c for l in lits):
            continue
        kept.append(c)
    return frozenset(kept)


def dnf_or(*ds) -> frozenset:
    return _absorb(c for d in ds for c in d)


def dnf_and(*ds) -> frozenset:
    out = DNF_TRUE
    for d in ds:
        out = _absorb(a | b for a in out for b in d)
        if not out:
            break
    return out


def to_dnf(f: Formula) -> frozenset:
    """Monotone DNF of a formula in negation normal form."""
    if isinstance(f, _Constant):
        return DNF_TRUE if f.value else DNF_FALSE
    if isinstance(f, And):
        return dnf_and(*(to_dnf(a) for a in f.args))
    if isinstance(f, Or):
        return dnf_or(*(to_dnf(a) for a in f.args))
    return frozenset([frozenset([f])])


def from_dnf(d: frozenset) -> Formula:
    clauses = [conj(*sorted(c)) if c else TRUE for c in d]
    return disj(*clauses) if clauses else FALSE


class _Progressor:
    """Letter progression over DNF obligations, memoized per elementary formula."""

    def __init__(self):
        self.memo: dict = {}

    def elem(self, e: Formula, letter: int) -> tuple[bool, frozenset]:
        key = (e, letter)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        if isinstance(e, Atom):
            v = bool(letter >> e.index & 1)
            out = (v, DNF_TRUE if v else DNF_FALSE)
        elif isinstance(e, Not):
            v = not (letter >> e.arg.index & 1)
            out = (v, DNF_TRUE if v else DNF_FALSE)
        elif isinstance(e, Next):
            out = (False, to_dnf(e.arg))
        elif isinstance(e, WeakNext):
            out = (True, to_dnf(e.arg))
        elif isinstance(e, Until):
            e1, c1 = self.formula(to_dnf(e.left), letter)
            e2, c2 = self.formula(to_dnf(e.right), letter)
            out = (e2, dnf_or(c2, dnf_and(c1, frozenset([frozenset([e])]))))
        elif isinstance(e, Release):
            e1, c1 = self.formula(to_dnf(e.left), letter)
            e2, c2 = self.formula(to_dnf(e.right), letter)
            out = (e2, dnf_and(c2, dnf_or(c1, frozenset([frozenset([e])]))))
        elif isinstance(e, Eventually):
            e1, c1 = self.formula(to_dnf(e.arg), letter)
            out = (e1, dnf_or(c1, frozenset([frozenset([e])])))
        elif isinstance(e, Always):
            e1, c1 = self.formula(to_dnf(e.arg), letter)
            out = (e1, dnf_and(c1, frozenset([frozenset([e])])))
        else:
            raise TypeError(f"not an elementary formula: {e!r}")
        self.memo[key] = out
        return out

    def formula(self, d: frozenset, letter: int) -> tuple[bool, frozenset]:
        end = False
        conts = []
        for clause in d:
            parts = [self.elem(e, letter) for e in clause]
            end = end or all(p[0] for p in parts)
            conts.append(dnf_and(*(p[1] for p in parts)))
        return end, dnf_or(*conts)


def progress(f: Formula, letter: int) -> tuple[bool, Formula]:
    """One-letter progression: (does the word ending here satisfy f, residual)."""
    end, cont = _Progressor().formula(to_dnf(normalize(f)), letter)
    return end, from_dnf(cont)


def current_atoms(f) -> tuple[int, ...]:
    """Atoms that can influence the next progression step (not under X/WX)."""
    out = set()
    stack = [f] if isinstance(f, Formula) else [e for c in f for e in c]
    while stack:
        g = stack.pop()
        if isinstance(g, Atom):
            out.add(g.index)
        elif not isinstance(g, (Next, WeakNext)):
            stack.extend(g.children)
    return tuple(sorted(out))


def _atom_names(phi: Formula, atoms) -> tuple[str, ...]:
    if isinstance(atoms, AtomTable):
        return tuple(atoms.names)
    if atoms is not None:
        return tuple(atoms)
    names: dict[int, str] = {}
    stack = [phi]
    while stack:
        g = stack.pop()
        if isinstance(g, Atom):
            names[g.index] = g.name
        stack.extend(g.children)
    n = max(names) + 1 if names else 0
    return tuple(names.get(i, f"p{i}") for i in range(n))


_INIT = object()


def compile_dfa(
    phi: Formula,
    atoms: AtomTable | Sequence[str] | None = None,
    max_states: int = DEFAULT_MAX_STATES,
    minimal: bool = True,
) -> Dfa:
    """Complete DFA accepting exactly the nonempty words satisfying ``phi``.

    ``atoms`` fixes the alphabet (defaults to the atoms occurring in ``phi``).
    Raises StateBlowup when the unminimized automaton would exceed
    ``max_states`` states.
    """
    names = _atom_names(phi, atoms)
    used = phi.atoms()
    if used and max(used) >= len(names):
        raise ValueError("formula mentions atoms outside the given alphabet")
    if len(names) > MAX_WIDTH:
        raise ValueError(f"at most {MAX_WIDTH} atoms are supported")
    start = to_dnf(normalize(phi))
    prog = _Progressor()

    # state keys: _INIT or (end, rest)
    index = {_INIT: 0}
    keys = [_INIT]
    edges: list[list[tuple[Guard, int]]] = []
    queue = deque([_INIT])
    while queue:
        key = queue.popleft()
        f = start if key is _INIT else key[1]
        support = current_atoms(f)
        m = np.arange(1 << len(support), dtype=np.int64)
        letters = np.zeros_like(m)
        for pos, a in enumerate(support):
            letters |= ((m >> pos) & 1) << a
        groups: dict[tuple, list[int]] = {}
        for letter in letters.tolist():
            groups.setdefault(prog.formula(f, letter), []).append(letter)
        row = []
        for succ, ls in groups.items():
            if succ not in index:
                if len(keys) >= max_states:
                    raise StateBlowup(f"more than {max_states} automaton states")
                index[succ] = len(keys)
                keys.append(succ)
                queue.append(succ)
            row.append((Guard.from_letters(support, ls), index[succ]))
        edges.append(row)

    # acceptance of the initial state is irrelevant (empty word excluded);
    # take whichever choice minimizes better, preferring non-accepting
    acc = [i for i, k in enumerate(keys) if k is not _INIT and k[0]]
    raw = make_dfa(names, 0, acc, edges)
    if not minimal:
        return raw
    best = minimize(raw)
    alt = minimize(make_dfa(names, 0, acc + [0], edges))
    if alt.n_states < best.n_states:
        best = alt
    return best


def compile_spec(text: str, atoms: AtomTable | None = None, **kw) -> Dfa:
    from .parser import parse_spec

    atoms = atoms if atoms is not None else AtomTable()
    phi = parse_spec(text, atoms)
    return compile_dfa(phi, atoms, **kw)
