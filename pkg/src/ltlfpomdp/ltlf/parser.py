"""Recursive-descent parser for LTLf specification strings.

Grammar (lowest to highest precedence)::

    impl   := disj ( "->" impl )?
    disj   := conj ( "|" conj )*
    conj   := temp ( "&" temp )*
    temp   := unary ( ("U" | "R") temp )?
    unary  := ("!" | "X" | "WX" | "F" | "G") unary | atom
    atom   := "true" | "false" | IDENT | "(" impl ")"

``U`` and ``R`` associate to the right, as does ``->``.  The single upper-case
letters ``X F G U R`` and ``WX`` are reserved and cannot be used as atom names.
"""
from __future__ import annotations

import re

from ..errors import SpecSyntaxError
from .syntax import (
    FALSE,
    TRUE,
    Always,
    And,
    AtomTable,
    Eventually,
    Formula,
    Next,
    Not,
    Or,
    Release,
    Until,
    WeakNext,
)

_TOKEN = re.compile(r"\s*(?:(->)|([!&|()])|([A-Za-z_][A-Za-z0-9_]*))")
_KEYWORDS = {"X", "WX", "F", "G", "U", "R", "true", "false"}
_UNARY = {"!": Not, "X": Next, "WX": WeakNext, "F": Eventually, "G": Always}


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SpecSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        start = m.start(m.lastindex)
        tokens.append((m.group(m.lastindex), start))
        pos = m.end()
    tokens.append(("", n))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, atoms: AtomTable):
        self.text = text
        self.atoms = atoms
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> str:
        return self.tokens[self.i][0]

    def error(self, message):
        pos = self.tokens[self.i][1]
        return SpecSyntaxError(message, _byte_offset(self.text, pos))

    def take(self) -> str:
        t = self.tok
        self.i += 1
        return t

    def expect(self, t):
        if self.tok != t:
            found = repr(self.tok) if self.tok else "end of input"
            raise self.error(f"expected {t!r}, found {found}")
        self.i += 1

    def parse(self) -> Formula:
        if self.tok == "":
            raise self.error("empty specification")
        f = self.impl()
        if self.tok != "":
            raise self.error(f"unexpected token {self.tok!r}")
        return f

    def impl(self):
        left = self.disj()
        if self.tok == "->":
            self.take()
            return Or(Not(left), self.impl())
        return left

    def disj(self):
        parts = [self.conj()]
        while self.tok == "|":
            self.take()
            parts.append(self.conj())
        return _fold(Or, parts)

    def conj(self):
        parts = [self.temporal()]
        while self.tok == "&":
            self.take()
            parts.append(self.temporal())
        return _fold(And, parts)

    def temporal(self):
        left = self.unary()
        if self.tok == "U":
            self.take()
            return Until(left, self.temporal())
        if self.tok == "R":
            self.take()
            return Release(left, self.temporal())
        return left

    def unary(self):
        op = _UNARY.get(self.tok)
        if op is not None:
            self.take()
            return op(self.unary())
        return self.primary()

    def primary(self):
        t = self.tok
        if t == "(":
            self.take()
            f = self.impl()
            self.expect(")")
            return f
        if t == "true":
            self.take()
            return TRUE
        if t == "false":
            self.take()
            return FALSE
        if t and (t[0].isalpha() or t[0] == "_") and t not in _KEYWORDS:
            name = self.take()
            return self.atoms.atom(name)
        if t == "":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected token {t!r}")


def _fold(cls, parts):
    # left-nested binary nodes, as the grammar builds them
    f = parts[0]
    for p in parts[1:]:
        f = cls(f, p)
    return f


def parse_spec(text: str, atoms: AtomTable | None = None) -> Formula:
    """Parse ``text`` into a formula, registering new atoms in ``atoms``.

    Raises :class:`SpecSyntaxError` (with a byte offset) on malformed input and
    :class:`SealedAtomError` when ``atoms`` is sealed and a name is unknown.
    """
    if atoms is None:
        atoms = AtomTable()
    return _Parser(text, atoms).parse()
