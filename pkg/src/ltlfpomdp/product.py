"""Synchronous product of a labeled POMDP with a specification DFA."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import AtomMismatch, BlowUp
from .ltlf.dfa import Dfa
from .model import Fixed, Geometric, GoalSet, LabeledPomdp, RewardBounds, validate

DEFAULT_NODE_CAP = 1_000_000
CHANNELS = ("objective", "constraint", "accept")


@dataclass(eq=False)
class ProductPomdp(LabeledPomdp):
    """Product state ``x = s * n_q + q``; ``rf[x] = 1`` iff the DFA component accepts.

    The DFA reads the label of the state being left, so after the last action
    the automaton component of ``X_{T+1}`` has consumed ``L(S_0) .. L(S_T)``.
    """

    rf: np.ndarray = None
    n_q: int = 1
    pairs: np.ndarray = None
    dfa: Dfa = None
    base: LabeledPomdp = None
    bounds: RewardBounds = None

    def index(self, s: int, q: int) -> int:
        hit = np.flatnonzero((self.pairs[:, 0] == s) & (self.pairs[:, 1] == q))
        if not hit.size:
            raise KeyError((s, q))
        return int(hit[0])


def dfa_letters(m: LabeledPomdp, dfa: Dfa) -> np.ndarray:
    """Model labels re-encoded over the DFA's atom order."""
    return encode_letters(m.labels, m.atoms, dfa)


def encode_letters(labels, atoms, dfa: Dfa) -> np.ndarray:
    """Letters over ``atoms`` re-encoded over the DFA's atom order (any shape)."""
    pos = {a: i for i, a in enumerate(atoms)}
    missing = [a for a in dfa.atoms if a not in pos]
    if missing:
        raise AtomMismatch(f"automaton atoms {missing} are not in the model's atom table")
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros(labels.shape, dtype=np.int64)
    for i, a in enumerate(dfa.atoms):
        out |= ((labels >> pos[a]) & 1) << i
    return out


def build_product(m: LabeledPomdp, dfa: Dfa, prune: bool = False, goal_on_accept: bool = False) -> ProductPomdp:
    """Constrained product POMDP of ``m`` and ``dfa``.

    ``goal_on_accept`` replaces the goal set of a goal model by the product
    states whose automaton component is accepting.  ``prune`` drops product
    states unreachable from the initial support under any actions.
    """
    bounds = validate(m)
    letters = dfa_letters(m, dfa)
    delta = dfa.letter_table(letters)  # (n_q, S)
    nq, S = dfa.n_states, m.n_states
    P = _kernel(m.P, delta)
    Z = np.repeat(m.Z, nq, axis=-2)
    ro = np.repeat(m.ro, nq, axis=-2)
    rc = np.repeat(m.rc, nq, axis=-2)
    init = np.zeros(S * nq)
    init[np.arange(S) * nq + dfa.initial] = m.init
    acc = np.zeros(nq)
    acc[list(dfa.accepting)] = 1.0
    rf = np.tile(acc, S)
    pairs = np.stack([np.repeat(np.arange(S), nq), np.tile(np.arange(nq), S)], axis=1)
    labels = np.repeat(m.labels, nq)
    horizon = m.horizon
    if isinstance(horizon, GoalSet):
        if goal_on_accept:
            goals = np.flatnonzero(rf > 0)
        else:
            goals = np.flatnonzero(np.isin(pairs[:, 0], horizon.goals))
        horizon = GoalSet(tuple(goals), horizon.step_cap)
    keep = np.arange(S * nq)
    if prune:
        keep = _reachable(P, init)
        P = P[..., keep[:, None], keep]
        Z, ro, rc = Z[..., keep, :], ro[..., keep, :], rc[..., keep, :]
        init, rf, pairs, labels = init[keep], rf[keep], pairs[keep], labels[keep]
        if isinstance(horizon, GoalSet):
            remap = {int(x): i for i, x in enumerate(keep)}
            horizon = GoalSet(tuple(remap[g] for g in horizon.goals if g in remap), horizon.step_cap)
    names = None
    if m.state_names:
        names = tuple(f"{m.state_names[s]}|q{q}" for s, q in pairs)
    return ProductPomdp(
        P, Z, init, labels, ro, rc, horizon, m.atoms, names, m.action_names, m.obs_names,
        dict(m.meta), rf=rf, n_q=nq, pairs=pairs, dfa=dfa, base=m, bounds=bounds,
    )


def _kernel(P: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Product kernel from ``P[..., u, s, s']`` and ``delta[q, s]``."""
    lead = P.shape[:-3]
    U, S, _ = P.shape[-3:]
    nq = delta.shape[0]
    out = np.zeros(lead + (U, S, nq, S, nq))
    for q in range(nq):
        for s in range(S):
            out[..., :, s, q, :, delta[q, s]] = P[..., :, s, :]
    return out.reshape(lead + (U, S * nq, S * nq))


def _reachable(P: np.ndarray, init: np.ndarray) -> np.ndarray:
    any_step = (P.reshape(-1, P.shape[-2], P.shape[-1]) > 0).any(axis=0)
    seen = init > 0
    frontier = seen.copy()
    while frontier.any():
        nxt = any_step[frontier].any(axis=0) & ~seen
        seen |= nxt
        frontier = nxt
    return np.flatnonzero(seen)


# -- exact evaluation ----------------------------------------------------------


class ExactEval(NamedTuple):
    value: float
    trunc: float  # bound on the neglected tail (0 for fixed horizons)


def _node_key(node):
    if isinstance(node, np.ndarray):
        return ("array", node.tobytes())
    try:
        hash(node)
    except TypeError:
        return None
    return ("node", node)


def eval_channels(
    p: LabeledPomdp,
    policy,
    rf: np.ndarray | None = None,
    eps_trunc: float = 1e-10,
    node_cap: int = DEFAULT_NODE_CAP,
) -> dict[str, ExactEval]:
    """Exact expected objective, constraint and accept channels of a pure policy.

    Forward enumeration over observation histories, carrying unnormalized
    state distributions.  Histories whose controller nodes coincide are merged.
    """
    if rf is None:
        rf = getattr(p, "rf", None)
        if rf is None:
            rf = np.zeros(p.n_states)
    h = p.horizon
    scale_r = max(float(np.abs(p.ro).max(initial=0)), float(np.abs(p.rc).max(initial=0)), 1.0)
    if isinstance(h, Fixed):
        horizon = h.T
    elif isinstance(h, Geometric):
        # tail of the reward sums after t* is at most gamma^t* * scale / (1 - gamma)
        horizon = int(np.ceil(np.log(eps_trunc * (1 - h.gamma) / scale_r) / np.log(h.gamma)))
    else:
        horizon = h.step_cap
    goal = np.zeros(p.n_states, dtype=bool)
    if isinstance(h, GoalSet):
        goal[list(h.goals)] = True

    tot = {"objective": 0.0, "constraint": 0.0, "accept": 0.0}
    alive = p.init[:, None] * p.Z_at(0)
    layer = {}
    order = []
    for o in range(p.n_obs):
        a = alive[:, o]
        if a.sum() > 0:
            _merge(layer, order, policy.start(o), a)
    nodes = len(layer)
    remaining = 1.0
    for t in range(horizon + 1):
        if isinstance(h, Geometric):
            w_stage, w_stop = h.gamma ** t, (1 - h.gamma) * h.gamma ** t
        else:
            w_stage = w_stop = 1.0
        P, Z, ro, rc = p.P_at(t), p.Z_at(t + 1), p.ro_at(t), p.rc_at(t)
        nxt: dict = {}
        nxt_order: list = []
        remaining = 0.0
        for key in order:
            node, a = layer[key]
            u = int(policy.action(node))
            tot["objective"] += w_stage * float(a @ ro[:, u])
            tot["constraint"] += w_stage * float(a @ rc[:, u])
            after = a @ P[u]
            if isinstance(h, Fixed):
                if t == h.T:
                    tot["accept"] += float(after @ rf)
                    continue
            elif isinstance(h, Geometric):
                tot["accept"] += w_stop * float(after @ rf)
            else:
                stop = a * goal
                tot["accept"] += float((stop @ P[u]) @ rf)
                after = (a * ~goal) @ P[u]
            if after.sum() <= 0:
                continue
            remaining += float(after.sum())
            for o in range(p.n_obs):
                b = after * Z[:, o]
                if b.sum() > 0:
                    _merge(nxt, nxt_order, policy.advance(node, u, o), b)
            if nodes + len(nxt_order) > node_cap:
                raise BlowUp(f"exact evaluation exceeded {node_cap} history nodes",
                             nodes + len(nxt_order), node_cap)
        nodes += len(nxt_order)
        layer, order = nxt, nxt_order
        if not order:
            break
        if isinstance(h, GoalSet) and remaining < eps_trunc:
            break
    if isinstance(h, Fixed):
        trunc = 0.0
    elif isinstance(h, Geometric):
        trunc = h.gamma ** (horizon + 1) * scale_r / (1 - h.gamma)
    else:
        trunc = remaining if order else 0.0
    return {k: ExactEval(v, trunc) for k, v in tot.items()}


def _merge(layer: dict, order: list, node, vec):
    key = _node_key(node)
    if key is None:
        key = ("id", len(order))
    if key in layer:
        old_node, old = layer[key]
        layer[key] = (old_node, old + vec)
    else:
        layer[key] = (node, vec)
        order.append(key)


def eval_policy_exact(p: LabeledPomdp, policy, channel: str = "objective", **kw) -> ExactEval:
    if channel not in CHANNELS:
        raise ValueError(f"channel must be one of {CHANNELS}")
    return eval_channels(p, policy, **kw)[channel]


def product_stats(p: ProductPomdp) -> dict:
    reach = _reachable(p.P, p.init)
    return {
        "base_states": p.base.n_states,
        "dfa_states": p.n_q,
        "states": p.n_states,
        "reachable_states": int(reach.size),
        "accept_fraction": float(p.rf[reach].mean()) if reach.size else 0.0,
        "actions": p.n_actions,
        "observations": p.n_obs,
    }
