"""Belief tracking over hidden states."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

IMPOSSIBLE = 1e-12


class BeliefStep(NamedTuple):
    belief: np.ndarray
    prob: float  # probability of the observation given the previous belief and action
    impossible: bool


def initial(init: np.ndarray, Z: np.ndarray, obs: int) -> BeliefStep:
    """Belief after the first observation."""
    return _condition(np.asarray(init, dtype=float), Z, obs)


def update(b: np.ndarray, P_u: np.ndarray, Z: np.ndarray, obs: int) -> BeliefStep:
    """Bayes update after taking an action with kernel ``P_u`` and observing ``obs``.

    Observations below ``IMPOSSIBLE`` probability are flagged; the returned
    belief is then the prediction without conditioning.
    """
    return _condition(b @ P_u, Z, obs)


def _condition(pred: np.ndarray, Z: np.ndarray, obs: int) -> BeliefStep:
    joint = pred * Z[:, obs]
    p = float(joint.sum())
    if p < IMPOSSIBLE:
        total = pred.sum()
        return BeliefStep(pred / total if total > 0 else pred, p, True)
    return BeliefStep(joint / p, p, False)


def obs_probs(b: np.ndarray, P_u: np.ndarray, Z: np.ndarray) -> np.ndarray:
    return (b @ P_u) @ Z
