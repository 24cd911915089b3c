"""Goal-model transform that folds the specification multiplier into the reward."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonNegativeReward, WrongHorizon
from ..model import GoalSet, LabeledPomdp


@dataclass(eq=False)
class GoalLagrangian:
    """Transformed goal model plus the indices of its bookkeeping states.

    States ``0 .. n-1`` are the original product states, then the two
    bookkeeping states reached one step after a goal (accepting, rejecting)
    and finally the unique absorbing goal ``goal``.  Their observation is the
    extra symbol ``done``.  The transformed value equals the Lagrangian
    ``R_o + lam (R^f - 1 + delta)`` minus ``lam``.
    """

    model: LabeledPomdp
    lam: float
    delta: float
    accept_state: int
    reject_state: int
    goal: int
    done: int

    @property
    def offset(self) -> float:
        return self.lam


def build_goal_lagrangian(p: LabeledPomdp, lam: float, delta: float) -> GoalLagrangian:
    """Replace the goal set by a two-step gadget ending in a single goal.

    Rewards and transitions of non-goal states are kept.  Acting in an old
    goal state ``x`` (time T) earns ``r_o(x, u)`` and moves to the bookkeeping
    state that records ``r^f(X_{T+1})``; there every action earns
    ``lam (r^f - 2 + delta)`` (time T+1) and leads to the goal (time T+2).
    """
    h = p.horizon
    if not isinstance(h, GoalSet):
        raise WrongHorizon("the goal transform needs a goal-set horizon")
    if not p.time_invariant:
        raise WrongHorizon("the goal transform needs time-invariant arrays")
    n, U, O = p.n_states, p.n_actions, p.n_obs
    goals = np.zeros(n, dtype=bool)
    goals[list(h.goals)] = True
    for x, u in np.argwhere((p.ro >= 0) & ~goals[:, None]):
        raise NonNegativeReward(int(x), int(u), float(p.ro[x, u]))
    rf = getattr(p, "rf", None)
    rf = np.zeros(n) if rf is None else np.asarray(rf, dtype=float)

    acc, rej, g = n, n + 1, n + 2
    N = n + 3
    P = np.zeros((U, N, N))
    P[:, :n, :n] = p.P
    # probability that X_{T+1} is accepting, per (goal state, action)
    hit = p.P @ rf  # (U, n)
    for x in np.flatnonzero(goals):
        P[:, x, :] = 0.0
        P[:, x, acc] = hit[:, x]
        P[:, x, rej] = 1.0 - hit[:, x]
    P[:, acc, g] = 1.0
    P[:, rej, g] = 1.0
    P[:, g, g] = 1.0

    Z = np.zeros((N, O + 1))
    Z[:n, :O] = p.Z
    Z[n:, O] = 1.0
    ro = np.zeros((N, U))
    ro[:n] = p.ro
    ro[acc] = lam * (1.0 - 2.0 + delta)
    ro[rej] = lam * (0.0 - 2.0 + delta)
    init = np.concatenate([p.init, np.zeros(3)])
    labels = np.concatenate([p.labels, np.zeros(3, dtype=np.int64)])
    names = None
    if p.state_names:
        names = tuple(p.state_names) + ("goal+1:accept", "goal+1:reject", "goal")
    obs_names = tuple(p.obs_names) + ("done",) if p.obs_names else None
    model = LabeledPomdp(
        P, Z, init, labels, ro, np.zeros((N, U)), GoalSet((g,), h.step_cap), p.atoms,
        names, p.action_names, obs_names, dict(p.meta),
    )
    return GoalLagrangian(model, float(lam), float(delta), acc, rej, g, O)
