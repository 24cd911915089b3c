"""DOT and JSON serialization of automata."""
from __future__ import annotations

import json

import numpy as np

from .dfa import Dfa, make_dfa
from .guards import Guard
from .parser import parse_spec
from .semantics import eval_words
from .syntax import AtomTable


def to_json_dict(d: Dfa) -> dict:
    return {
        "atoms": list(d.atoms),
        "states": d.n_states,
        "initial": d.initial,
        "accepting": sorted(d.accepting),
        "edges": [
            {"from": q, "guard": g.to_dnf(d.atoms), "to": t}
            for q, row in enumerate(d.edges)
            for g, t in row
        ],
    }


def to_json(d: Dfa, indent: int | None = 2) -> str:
    return json.dumps(to_json_dict(d), indent=indent)


def guard_from_text(text: str, atoms: AtomTable) -> Guard:
    """Guard for a propositional formula over a sealed atom table."""
    phi = parse_spec(text, atoms)
    support = tuple(sorted(phi.atoms()))
    m = np.arange(1 << len(support), dtype=np.int64)
    letters = np.zeros_like(m)
    for pos, a in enumerate(support):
        letters |= ((m >> pos) & 1) << a
    return Guard(support, eval_words(phi, letters[:, None]))


def from_json_dict(data: dict) -> Dfa:
    atoms = AtomTable(data["atoms"], sealed=True)
    rows: list[list] = [[] for _ in range(data["states"])]
    for e in data["edges"]:
        rows[e["from"]].append((guard_from_text(e["guard"], atoms), e["to"]))
    d = make_dfa(atoms.names, data["initial"], data["accepting"], rows)
    d.check()
    return d


def from_json(text: str) -> Dfa:
    return from_json_dict(json.loads(text))


def to_dot(d: Dfa, name: str = "dfa") -> str:
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  __start [shape=point, label=""];']
    for q in d.states:
        shape = "doublecircle" if q in d.accepting else "circle"
        lines.append(f'  {q} [shape={shape}, label="{q}"];')
    lines.append(f"  __start -> {d.initial};")
    for q, row in enumerate(d.edges):
        for g, t in row:
            label = g.to_dnf(d.atoms).replace('"', '\\"')
            lines.append(f'  {q} -> {t} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
