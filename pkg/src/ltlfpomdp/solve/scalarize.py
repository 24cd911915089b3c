"""Single-reward problems whose value plus an offset is the Lagrangian."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import WrongHorizon
from ..model import Fixed, Geometric, GoalSet, LabeledPomdp
from .goal import build_goal_lagrangian

GOAL_GAMMA = 0.99


def multipliers(lam) -> tuple[float, float]:
    """``(lambda_f, lambda_c)`` from a LagrangePoint or a pair."""
    if hasattr(lam, "f") and hasattr(lam, "c"):
        return float(lam.f), float(lam.c)
    lf, lc = lam
    return float(lf), float(lc)


@dataclass(eq=False)
class ScalarizedPomdp:
    """POMDP with one stage reward ``r`` and optional terminal reward.

    Discounted problems (``T is None``) maximize ``E sum_t gamma^t r(X_t, U_t)``;
    fixed-horizon problems maximize ``E[sum_{t<=T} r_t(X_t, U_t) + terminal(X_{T+1})]``.
    In both cases the Lagrangian equals the optimal value plus ``offset``.
    """

    P: np.ndarray
    Z: np.ndarray
    init: np.ndarray
    r: np.ndarray
    gamma: float = 1.0
    offset: float = 0.0
    terminal: np.ndarray | None = None
    T: int | None = None

    def __post_init__(self):
        if self.terminal is None:
            self.terminal = np.zeros(self.init.shape[0])
        if self.T is None and not 0.0 < self.gamma < 1.0:
            raise WrongHorizon("discounted problems need 0 < gamma < 1")

    @property
    def n_states(self) -> int:
        return self.init.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[-3]

    @property
    def n_obs(self) -> int:
        return self.Z.shape[-1]

    @property
    def time_invariant(self) -> bool:
        return self.P.ndim == 3 and self.Z.ndim == 2 and self.r.ndim == 2

    def _at(self, arr, t, nd):
        return arr if arr.ndim == nd else arr[min(t, arr.shape[0] - 1)]

    def P_at(self, t):
        return self._at(self.P, t, 3)

    def Z_at(self, t):
        return self._at(self.Z, t, 2)

    def r_at(self, t):
        return self._at(self.r, t, 2)


def scalarize(p: LabeledPomdp, lam, delta: float = 1.0, rho: float = 0.0) -> ScalarizedPomdp:
    """Discounted reward ``r_o + lf (1-g)/g r_f + lc r_c`` for a geometric horizon.

    With stopping probability ``1 - g`` after every step, ``E[r_f(X_{T+1})]``
    equals ``(1-g)/g`` times the discounted sum of ``r_f(X_t)`` over ``t >= 1``,
    so the ``t = 0`` term is removed again through the offset.
    """
    h = p.horizon
    if not isinstance(h, Geometric):
        raise WrongHorizon("scalarize needs a geometric horizon")
    lf, lc = multipliers(lam)
    g = h.gamma
    rf = _accept(p)
    bonus = lf * (1.0 - g) / g
    r = p.ro + lc * p.rc + bonus * rf[:, None]
    offset = -lf * (1.0 - delta) - lc * rho - bonus * float(p.init @ rf)
    return ScalarizedPomdp(p.P, p.Z, p.init, r, g, offset)


def fixed_lagrangian(p: LabeledPomdp, lam, delta: float = 1.0, rho: float = 0.0) -> ScalarizedPomdp:
    """Stage reward ``r_o + lc r_c`` and terminal reward ``lf r_f`` for a fixed horizon."""
    h = p.horizon
    if not isinstance(h, Fixed):
        raise WrongHorizon("fixed_lagrangian needs a fixed horizon")
    lf, lc = multipliers(lam)
    r = p.ro + lc * p.rc
    offset = -lf * (1.0 - delta) - lc * rho
    return ScalarizedPomdp(p.P, p.Z, p.init, r, 1.0, offset, lf * _accept(p), h.T)


def goal_surrogate(p: LabeledPomdp, lam, delta: float = 1.0, rho: float = 0.0,
                   gamma: float = GOAL_GAMMA) -> ScalarizedPomdp:
    """Discounted version of the goal-gadget Lagrangian.

    The gadget folds ``lf`` into the rewards after the goal; the value of the
    undiscounted gadget plus ``lf - lc rho`` is the Lagrangian.  Discounting
    with ``gamma`` close to one keeps point-based solvers applicable, so the
    result is a surrogate whose value approaches the Lagrangian as
    ``gamma -> 1``.
    """
    lf, lc = multipliers(lam)
    gl = build_goal_lagrangian(p, lf, delta)
    m = gl.model
    rc = np.zeros_like(m.ro)
    rc[: p.n_states] = p.rc
    return ScalarizedPomdp(m.P, m.Z, m.init, m.ro + lc * rc, gamma, gl.offset - lc * rho)


def lagrangian_problem(p: LabeledPomdp, lam, delta: float = 1.0, rho: float = 0.0,
                       goal_gamma: float = GOAL_GAMMA) -> ScalarizedPomdp:
    """Scalarized problem for any supported horizon (goal models via ``goal_surrogate``)."""
    if isinstance(p.horizon, Fixed):
        return fixed_lagrangian(p, lam, delta, rho)
    if isinstance(p.horizon, GoalSet):
        return goal_surrogate(p, lam, delta, rho, goal_gamma)
    return scalarize(p, lam, delta, rho)


def objective_problem(p: LabeledPomdp) -> ScalarizedPomdp:
    """The unconstrained objective alone."""
    return lagrangian_problem(p, (0.0, 0.0))


def _accept(p) -> np.ndarray:
    rf = getattr(p, "rf", None)
    return np.zeros(p.n_states) if rf is None else np.asarray(rf, dtype=float)
