"""Batched Monte Carlo rollouts for channel estimation."""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import NonTermination
from .model import Fixed, Geometric, GoalSet, LabeledPomdp

CONFIDENCE = 0.99
Z99 = 2.5758293035489004  # two-sided normal quantile at 99%


class Estimate(NamedTuple):
    value: float
    radius: float  # half-width of a 99% confidence interval
    rigorous: bool = True  # Hoeffding (True) or normal approximation (False)


def hoeffding(range_: float, n: int, confidence: float = CONFIDENCE) -> float:
    """Two-sided Hoeffding radius for the mean of ``n`` samples in an interval of width ``range_``."""
    if n <= 0:
        return math.inf
    return range_ * math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * n))


def samples_for(radius: float, range_: float, confidence: float = CONFIDENCE) -> int:
    """Smallest sample count whose Hoeffding radius is at most ``radius``."""
    return math.ceil(range_ ** 2 * math.log(2.0 / (1.0 - confidence)) / (2.0 * radius ** 2))


class _Generic:
    """Row-wise adapter for policies without batch methods."""

    def __init__(self, policy):
        self.policy = policy

    def start_batch(self, obs):
        return [self.policy.start(int(o)) for o in obs]

    def action_batch(self, nodes):
        return np.array([int(self.policy.action(n)) for n in nodes], dtype=np.int64)

    def advance_batch(self, nodes, u, obs):
        return [self.policy.advance(n, int(a), int(o)) for n, a, o in zip(nodes, u, obs)]


def _take(nodes, rows):
    if isinstance(nodes, np.ndarray):
        return nodes[rows]
    idx = np.flatnonzero(rows) if rows.dtype == bool else rows
    return [nodes[i] for i in idx]


def _sample_rows(rng, probs: np.ndarray) -> np.ndarray:
    c = np.cumsum(probs, axis=1)
    r = rng.random(probs.shape[0]) * c[:, -1]
    return np.minimum((c <= r[:, None]).sum(axis=1), probs.shape[1] - 1)


def rollout_channels(
    m: LabeledPomdp,
    policy,
    n: int,
    seed=None,
    rf: np.ndarray | None = None,
    eps_trunc: float = 1e-4,
) -> dict[str, Estimate]:
    """Estimate objective, constraint and accept channels from ``n`` rollouts.

    Fixed horizons and the accept channel use per-run values, which are
    bounded, so their radii are Hoeffding radii.  Under a geometric horizon
    the constraint channel is estimated by the discounted sum along runs that
    ignore stopping (equal in expectation and bounded by ``max r_c / (1-g)``),
    truncated where the tail is below ``eps_trunc`` times that bound; the
    objective channel uses realized totals with a normal-approximation radius.
    """
    rng = np.random.default_rng(seed)
    if rf is None:
        rf = getattr(m, "rf", None)
    rf = np.zeros(m.n_states) if rf is None else np.asarray(rf, dtype=float)
    h = m.horizon
    batch = policy if hasattr(policy, "action_batch") else _Generic(policy)

    s = _sample_rows(rng, np.broadcast_to(m.init, (n, m.n_states)))
    o = _sample_rows(rng, m.Z_at(0)[s])
    nodes = batch.start_batch(o)
    obj = np.zeros(n)
    con = np.zeros(n)
    acc = np.zeros(n)
    rc_scale = float(np.abs(m.rc).max(initial=0.0))
    disc_con = isinstance(h, Geometric) and rc_scale > 0
    if isinstance(h, Fixed):
        stop = np.full(n, h.T)
        last = h.T
    elif isinstance(h, Geometric):
        stop = rng.geometric(1.0 - h.gamma, n) - 1
        last = int(stop.max())
        if disc_con:
            t_r = math.ceil(math.log(eps_trunc) / math.log(h.gamma))
            last = max(last, t_r)
    else:
        stop = np.full(n, -1)
        goal = np.zeros(m.n_states, dtype=bool)
        goal[list(h.goals)] = True
        last = h.step_cap
    rows = np.arange(n)
    running = np.ones(n, dtype=bool)  # still inside the realized horizon
    t = 0
    while rows.size:
        P, ro, rc = m.P_at(t), m.ro_at(t), m.rc_at(t)
        u = batch.action_batch(nodes)
        live = running[rows]
        obj[rows[live]] += ro[s[live], u[live]]
        if disc_con:
            con[rows] += h.gamma ** t * rc[s, u]
        else:
            con[rows[live]] += rc[s[live], u[live]]
        s_next = _sample_rows(rng, P[u, s])
        if isinstance(h, GoalSet):
            ends = live & goal[s]
        else:
            ends = live & (stop[rows] == t)
        acc[rows[ends]] = rf[s_next[ends]]
        running[rows[ends]] = False
        t += 1
        keep = running[rows] | (disc_con and t <= last)
        if isinstance(h, GoalSet) and keep.any() and t > last:
            raise NonTermination(f"rollout exceeded {last} steps without reaching a goal")
        if not keep.any():
            break
        rows, s, u, nodes = rows[keep], s_next[keep], u[keep], _take(nodes, keep)
        o = _sample_rows(rng, m.Z_at(t)[s])
        nodes = batch.advance_batch(nodes, u, o)

    out = {"accept": Estimate(float(acc.mean()), hoeffding(_span(rf), n))}
    if isinstance(h, Fixed):
        out["objective"] = Estimate(float(obj.mean()), hoeffding((h.T + 1) * _span(m.ro), n))
        out["constraint"] = Estimate(float(con.mean()), hoeffding((h.T + 1) * _span(m.rc), n))
        return out
    out["objective"] = Estimate(float(obj.mean()), _normal(obj), False)
    if isinstance(h, Geometric) and rc_scale > 0:
        bound = rc_scale / (1.0 - h.gamma)
        tail = h.gamma ** (last + 1) * rc_scale / (1.0 - h.gamma)
        out["constraint"] = Estimate(float(con.mean()), hoeffding(bound, n) + tail)
    elif rc_scale == 0:
        out["constraint"] = Estimate(0.0, 0.0)
    else:
        out["constraint"] = Estimate(float(con.mean()), _normal(con), False)
    return out


def _span(r: np.ndarray) -> float:
    return float(r.max() - r.min()) if r.size else 0.0


def _normal(x: np.ndarray) -> float:
    if x.size < 2:
        return math.inf
    return Z99 * float(x.std(ddof=1)) / math.sqrt(x.size)
