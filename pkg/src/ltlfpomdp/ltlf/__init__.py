"""Finite-trace temporal logic: parsing, semantics and DFA compilation."""
from .compile import compile_dfa, compile_spec, progress
from .dfa import Dfa, canonical, make_dfa, minimize
from .export import from_json, to_dot, to_json
from .guards import Guard
from .parser import parse_spec
from .semantics import accepts_all, eval_trace, eval_words, to_letter
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
    expand_derived,
    nnf,
    normalize,
)


def step(d: Dfa, q: int, letter: int) -> int:
    return d.step(q, letter)


__all__ = [
    "FALSE", "TRUE", "Always", "And", "Atom", "AtomTable", "Dfa", "Eventually",
    "Formula", "Guard", "Next", "Not", "Or", "Release", "Until", "WeakNext",
    "accepts_all", "canonical", "compile_dfa", "compile_spec", "eval_trace",
    "eval_words", "expand_derived", "from_json", "make_dfa", "minimize", "nnf",
    "normalize", "parse_spec", "progress", "step", "to_dot", "to_json", "to_letter",
]
