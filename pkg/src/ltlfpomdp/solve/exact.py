"""Exact optimal pure policies by backward induction over the history tree."""
from __future__ import annotations

import math
import sys
from typing import NamedTuple

import numpy as np

from ..errors import BlowUp
from ..model import LabeledPomdp
from .policy import TreePolicy
from .scalarize import ScalarizedPomdp, objective_problem

DEFAULT_NODE_CAP = 1_000_000
TIE_TOL = 1e-12


class ExactSolution(NamedTuple):
    policy: TreePolicy
    value: float  # optimal value of the scalarized problem (offset not included)
    offset: float
    tail: float  # bound on rewards beyond the truncation (0 for fixed horizons)
    nodes: int


def truncation_depth(gamma: float, scale: float, eps: float) -> int:
    """Smallest t* with ``gamma^(t*+1) * scale / (1 - gamma) <= eps``."""
    if scale <= 0:
        return 0
    t = math.log(eps * (1 - gamma) / scale) / math.log(gamma) - 1
    return max(0, math.ceil(t))


def solve_exact(
    sp: ScalarizedPomdp | LabeledPomdp,
    eps_trunc: float = 1e-10,
    node_cap: int = DEFAULT_NODE_CAP,
) -> ExactSolution:
    """Optimal pure policy over observation histories.

    Unnormalized beliefs are propagated down the tree, so the value of a node
    is linear in its belief and children add up.  Discounted problems are cut
    at the depth where the remaining reward is below ``eps_trunc``.
    """
    if not isinstance(sp, ScalarizedPomdp):
        sp = objective_problem(sp)
    if sp.T is not None:
        last, gamma, tail = sp.T, 1.0, 0.0
    else:
        scale = float(np.abs(sp.r).max(initial=0.0))
        last = truncation_depth(sp.gamma, scale, eps_trunc)
        gamma = sp.gamma
        tail = gamma ** (last + 1) * scale / (1 - gamma)
    U, O = sp.n_actions, sp.n_obs
    memo: dict = {}  # (t, belief bytes) -> (value, best action)
    count = [0]
    flat: dict = {}

    def stage(t: int):
        # (X, U * X') kernel, stage reward and next observation matrix
        key = t if not sp.time_invariant else 0
        if key not in flat:
            P = sp.P_at(t)
            flat[key] = (P.transpose(1, 0, 2).reshape(P.shape[1], -1), sp.r_at(t), sp.Z_at(t + 1))
        return flat[key]

    def visit(t: int, a: np.ndarray) -> float:
        # nodes with equal unnormalized beliefs share their subtree
        key = (t, a.tobytes())
        hit = memo.get(key)
        if hit is not None:
            return hit[0]
        count[0] += 1
        if count[0] > node_cap:
            raise BlowUp(f"history tree exceeded {node_cap} nodes", count[0], node_cap)
        Pf, r, Zn = stage(t)
        now = gamma ** t * (a @ r)
        afters = (a @ Pf).reshape(U, -1)
        if t == last:
            vals = now + (afters @ sp.terminal if sp.T is not None else 0.0)
        else:
            mass = afters @ Zn
            vals = now.copy()
            for u in range(U):
                for o in np.flatnonzero(mass[u] > 0).tolist():
                    vals[u] += visit(t + 1, afters[u] * Zn[:, o])
        best, best_u = -np.inf, None
        for u in range(U):
            v = float(vals[u])
            if best_u is None or v > best + TIE_TOL * max(1.0, abs(best)):
                best, best_u = v, u
        memo[key] = (best, best_u)
        return best

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 4 * last + 100))
    roots = []
    try:
        total = 0.0
        Z0 = sp.Z_at(0)
        for o in range(O):
            a = sp.init * Z0[:, o]
            if a.sum() > 0:
                total += visit(0, a)
                roots.append(((o,), a))
    finally:
        sys.setrecursionlimit(old)
    return ExactSolution(_tree(roots, memo, stage, U, last), total, sp.offset, tail, count[0])


def _tree(roots, memo, stage, U, last) -> TreePolicy:
    """Follow the optimal actions from the roots and key them by observation history."""
    out = {}
    stack = [(h, a, 0) for h, a in roots]
    while stack:
        h, a, t = stack.pop()
        u = memo[(t, a.tobytes())][1]
        out[h] = u
        if t == last:
            continue
        Pf, _, Zn = stage(t)
        after = (a @ Pf).reshape(U, -1)[u]
        mass = after @ Zn
        for o in np.flatnonzero(mass > 0).tolist():
            stack.append((h + (o,), after * Zn[:, o], t + 1))
    return TreePolicy(out)
