"""LTLf abstract syntax.

Formulas are immutable and compare structurally; the hash is computed once at
construction so formulas can be used directly as keys of automaton-state tables.
``And``/``Or`` are n-ary (at least two operands); the parser builds binary nodes
and :func:`normalize` flattens them.
"""
from __future__ import annotations

from typing import Iterable

from ..errors import SealedAtomError


class AtomTable:
    """Dense name <-> index map for atomic propositions."""

    def __init__(self, names: Iterable[str] = (), sealed: bool = False):
        self.names: list[str] = []
        self._index: dict[str, int] = {}
        for name in names:
            self.add(name)
        self.sealed = sealed

    def add(self, name: str) -> int:
        if name in self._index:
            return self._index[name]
        if getattr(self, "sealed", False):
            raise SealedAtomError(name)
        self._index[name] = len(self.names)
        self.names.append(name)
        return self._index[name]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SealedAtomError(name) from None

    def atom(self, name: str) -> "Atom":
        return Atom(self.add(name), name)

    def seal(self) -> "AtomTable":
        self.sealed = True
        return self

    def letter(self, names: Iterable[str]) -> int:
        """Bitset letter with the given propositions true."""
        bits = 0
        for name in names:
            bits |= 1 << self.index(name)
        return bits

    def names_of(self, letter: int) -> frozenset[str]:
        return frozenset(n for i, n in enumerate(self.names) if letter >> i & 1)

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self._index

    def __repr__(self):
        return f"AtomTable({self.names!r}, sealed={self.sealed})"


class Formula:
    __slots__ = ("_key", "_hash")
    rank = -1

    def _init(self, key):
        self._key = key
        self._hash = hash(key)

    @property
    def children(self) -> tuple["Formula", ...]:
        return ()

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Formula) or self._hash != other._hash:
            return False
        return self._key == other._key

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self._key < other._key

    def __repr__(self):
        return f"<{self}>"

    def atoms(self) -> frozenset[int]:
        out = set()
        stack = [self]
        while stack:
            f = stack.pop()
            if isinstance(f, Atom):
                out.add(f.index)
            stack.extend(f.children)
        return frozenset(out)

    def depth(self) -> int:
        if not self.children:
            return 0
        return 1 + max(c.depth() for c in self.children)


class _Constant(Formula):
    __slots__ = ("value",)

    def __init__(self, value: bool):
        self.value = value
        self._init((0, int(value)))

    def __str__(self):
        return "true" if self.value else "false"

    def __reduce__(self):
        return (_Constant, (self.value,))


TRUE = _Constant(True)
FALSE = _Constant(False)


class Atom(Formula):
    __slots__ = ("index", "name")
    rank = 1

    def __init__(self, index: int, name: str | None = None):
        self.index = index
        self.name = name if name is not None else f"p{index}"
        self._init((1, index))

    def __str__(self):
        return self.name


class _Unary(Formula):
    __slots__ = ("arg",)
    symbol = "?"

    def __init__(self, arg: Formula):
        self.arg = arg
        self._init((self.rank, arg._key))

    @property
    def children(self):
        return (self.arg,)

    def __str__(self):
        return f"{self.symbol}{_wrap(self.arg)}"


class Not(_Unary):
    __slots__ = ()
    rank = 2
    symbol = "!"


class Next(_Unary):
    __slots__ = ()
    rank = 5
    symbol = "X "


class WeakNext(_Unary):
    __slots__ = ()
    rank = 6
    symbol = "WX "


class Eventually(_Unary):
    __slots__ = ()
    rank = 9
    symbol = "F "


class Always(_Unary):
    __slots__ = ()
    rank = 10
    symbol = "G "


class _NAry(Formula):
    __slots__ = ("args",)
    symbol = "?"

    def __init__(self, *args: Formula):
        if len(args) < 2:
            raise ValueError(f"{type(self).__name__} needs at least two operands")
        self.args = tuple(args)
        self._init((self.rank, tuple(a._key for a in self.args)))

    @property
    def children(self):
        return self.args

    def __str__(self):
        return "(" + f" {self.symbol} ".join(str(a) for a in self.args) + ")"


class And(_NAry):
    __slots__ = ()
    rank = 3
    symbol = "&"


class Or(_NAry):
    __slots__ = ()
    rank = 4
    symbol = "|"


class _Binary(Formula):
    __slots__ = ("left", "right")
    symbol = "?"

    def __init__(self, left: Formula, right: Formula):
        self.left = left
        self.right = right
        self._init((self.rank, left._key, right._key))

    @property
    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"({self.left} {self.symbol} {self.right})"


class Until(_Binary):
    __slots__ = ()
    rank = 7
    symbol = "U"


class Release(_Binary):
    __slots__ = ()
    rank = 8
    symbol = "R"


def _wrap(f: Formula) -> str:
    s = str(f)
    if isinstance(f, (_Unary, Atom, _Constant)) or s.startswith("("):
        return s
    return f"({s})"


def implies(a: Formula, b: Formula) -> Formula:
    return Or(Not(a), b)


# -- normalization ---------------------------------------------------------


def nnf(f: Formula, negate: bool = False) -> Formula:
    """Negation normal form: ``Not`` only directly above atoms."""
    if isinstance(f, _Constant):
        return FALSE if f.value == negate else TRUE
    if isinstance(f, Atom):
        return Not(f) if negate else f
    if isinstance(f, Not):
        return nnf(f.arg, not negate)
    if isinstance(f, And):
        parts = [nnf(a, negate) for a in f.args]
        return Or(*parts) if negate else And(*parts)
    if isinstance(f, Or):
        parts = [nnf(a, negate) for a in f.args]
        return And(*parts) if negate else Or(*parts)
    if isinstance(f, Next):
        return WeakNext(nnf(f.arg, True)) if negate else Next(nnf(f.arg))
    if isinstance(f, WeakNext):
        return Next(nnf(f.arg, True)) if negate else WeakNext(nnf(f.arg))
    if isinstance(f, Until):
        if negate:
            return Release(nnf(f.left, True), nnf(f.right, True))
        return Until(nnf(f.left), nnf(f.right))
    if isinstance(f, Release):
        if negate:
            return Until(nnf(f.left, True), nnf(f.right, True))
        return Release(nnf(f.left), nnf(f.right))
    if isinstance(f, Eventually):
        return Always(nnf(f.arg, True)) if negate else Eventually(nnf(f.arg))
    if isinstance(f, Always):
        return Eventually(nnf(f.arg, True)) if negate else Always(nnf(f.arg))
    raise TypeError(f"not a formula: {f!r}")


def conj(*args: Formula) -> Formula:
    """Normalized conjunction of NNF formulas."""
    return _junction(And, args)


def disj(*args: Formula) -> Formula:
    return _junction(Or, args)


def _junction(cls, args):
    unit, zero = (TRUE, FALSE) if cls is And else (FALSE, TRUE)
    seen = set()
    for a in args:
        parts = a.args if type(a) is cls else (a,)
        for p in parts:
            if p == zero:
                return zero
            if p != unit:
                seen.add(p)
    # complementary literals
    for p in seen:
        if isinstance(p, Not) and p.arg in seen:
            return zero
    if not seen:
        return unit
    if len(seen) == 1:
        return next(iter(seen))
    return cls(*sorted(seen))


def normalize(f: Formula) -> Formula:
    """NNF plus flattening, operand sorting, deduplication and constant folding.

    The result is a canonical representative used as an automaton-state key;
    it is semantically equivalent to ``f`` on every nonempty finite word.
    """
    return _simplify(nnf(f))


def _simplify(f: Formula) -> Formula:
    if isinstance(f, (_Constant, Atom, Not)):
        return f
    if isinstance(f, And):
        return conj(*(_simplify(a) for a in f.args))
    if isinstance(f, Or):
        return disj(*(_simplify(a) for a in f.args))
    if isinstance(f, Next):
        arg = _simplify(f.arg)
        return FALSE if arg == FALSE else Next(arg)
    if isinstance(f, WeakNext):
        arg = _simplify(f.arg)
        return TRUE if arg == TRUE else WeakNext(arg)
    if isinstance(f, Eventually):
        arg = _simplify(f.arg)
        if isinstance(arg, (_Constant, Eventually)):
            return arg
        return Eventually(arg)
    if isinstance(f, Always):
        arg = _simplify(f.arg)
        if isinstance(arg, (_Constant, Always)):
            return arg
        return Always(arg)
    if isinstance(f, Until):
        left, right = _simplify(f.left), _simplify(f.right)
        if isinstance(right, _Constant) or left == FALSE:
            return right
        if left == TRUE:
            return _simplify(Eventually(right))
        return Until(left, right)
    if isinstance(f, Release):
        left, right = _simplify(f.left), _simplify(f.right)
        if isinstance(right, _Constant) or left == TRUE:
            return right
        if left == FALSE:
            return _simplify(Always(right))
        return Release(left, right)
    raise TypeError(f"not a formula: {f!r}")


def expand_derived(f: Formula) -> Formula:
    """Rewrite F/G/R/WX into the core grammar {true, a, !, &, X, U}."""
    if isinstance(f, (_Constant, Atom)):
        return f
    if isinstance(f, Not):
        return Not(expand_derived(f.arg))
    if isinstance(f, And):
        return And(*(expand_derived(a) for a in f.args))
    if isinstance(f, Or):
        return Not(And(*(Not(expand_derived(a)) for a in f.args)))
    if isinstance(f, Next):
        return Next(expand_derived(f.arg))
    if isinstance(f, WeakNext):
        return Not(Next(Not(expand_derived(f.arg))))
    if isinstance(f, Until):
        return Until(expand_derived(f.left), expand_derived(f.right))
    if isinstance(f, Release):
        return Not(Until(Not(expand_derived(f.left)), Not(expand_derived(f.right))))
    if isinstance(f, Eventually):
        return Until(TRUE, expand_derived(f.arg))
    if isinstance(f, Always):
        return Not(Until(TRUE, Not(expand_derived(f.arg))))
    raise TypeError(f"not a formula: {f!r}")
