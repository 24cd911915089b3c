"""Executable pure policies: alpha-vector controllers and history trees."""
from __future__ import annotations

import hashlib
import json

import numpy as np

from . import belief as bel

TIE_TOL = 1e-12


def geometry_hash(P: np.ndarray, Z: np.ndarray) -> str:
    h = hashlib.sha256()
    for arr in (P, Z):
        a = np.ascontiguousarray(arr, dtype=float)
        h.update(repr(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def best_alpha(alphas: np.ndarray, actions: np.ndarray, b: np.ndarray) -> int:
    """Index of the maximizing vector; ties go to the lowest action."""
    scores = alphas @ b
    top = scores.max()
    tied = np.flatnonzero(scores >= top - TIE_TOL * max(1.0, abs(top)))
    return int(tied[np.argmin(actions[tied])])


class AlphaPolicy:
    """Greedy controller over a set of action-tagged alpha vectors.

    The controller node is the current belief; ``P``, ``Z`` and ``init`` are the
    time-invariant geometry used for belief tracking.
    """

    def __init__(self, P, Z, init, alphas, actions):
        self.P = np.asarray(P, dtype=float)
        self.Z = np.asarray(Z, dtype=float)
        self.init = np.asarray(init, dtype=float)
        self.alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
        self.actions = np.asarray(actions, dtype=np.int64).reshape(-1)
        if self.alphas.shape[0] == 0 or self.alphas.shape[0] != self.actions.size:
            raise ValueError("need at least one alpha vector, each with an action")
        if not np.isfinite(self.alphas).all():
            raise ValueError("alpha vectors must be finite")

    def start(self, obs):
        return bel.initial(self.init, self.Z, obs).belief

    def action(self, node) -> int:
        return int(self.actions[best_alpha(self.alphas, self.actions, node)])

    def advance(self, node, action, obs):
        return bel.update(node, self.P[action], self.Z, obs).belief

    def start_batch(self, obs: np.ndarray) -> np.ndarray:
        B = self.init[None, :] * self.Z[:, obs].T
        return B / B.sum(axis=1, keepdims=True)

    def action_batch(self, B: np.ndarray) -> np.ndarray:
        return batch_actions(self.alphas, self.actions, B)

    def advance_batch(self, B: np.ndarray, u: np.ndarray, obs: np.ndarray) -> np.ndarray:
        return batch_update(self.P, self.Z, B, u, obs)

    def value(self, b) -> float:
        return float((self.alphas @ b).max())

    def to_dict(self) -> dict:
        return {
            "alphas": [{"action": int(u), "vector": v.tolist()} for u, v in zip(self.actions, self.alphas)],
            "geometry": geometry_hash(self.P, self.Z),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict, P, Z, init) -> "AlphaPolicy":
        if data.get("geometry") not in (None, geometry_hash(P, Z)):
            raise ValueError("policy was computed for a different model geometry")
        alphas = [a["vector"] for a in data["alphas"]]
        actions = [a["action"] for a in data["alphas"]]
        return cls(P, Z, init, alphas, actions)


class TreePolicy:
    """Decision tree over observation histories; unknown histories take ``default``."""

    def __init__(self, table: dict, default: int = 0):
        self.table = dict(table)
        self.default = int(default)

    def start(self, obs):
        return (int(obs),)

    def action(self, node) -> int:
        return self.table.get(node, self.default)

    def advance(self, node, action, obs):
        return node + (int(obs),)

    def to_dict(self) -> dict:
        return {
            "tree": [{"observations": list(k), "action": int(v)} for k, v in sorted(self.table.items())],
            "default": self.default,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TreePolicy":
        return cls({tuple(e["observations"]): e["action"] for e in data["tree"]}, data.get("default", 0))


def batch_actions(alphas: np.ndarray, actions: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise ``best_alpha`` action for a stack of beliefs."""
    scores = B @ alphas.T
    top = scores.max(axis=1, keepdims=True)
    tied = scores >= top - TIE_TOL * np.maximum(1.0, np.abs(top))
    big = actions.max() + 1
    return np.where(tied, actions[None, :], big).min(axis=1)


def batch_update(P: np.ndarray, Z: np.ndarray, B: np.ndarray, u: np.ndarray, obs: np.ndarray) -> np.ndarray:
    """Row-wise belief update; impossible observations keep the prediction."""
    pred = np.empty_like(B)
    for a in np.unique(u):
        rows = u == a
        pred[rows] = B[rows] @ P[a]
    joint = pred * Z[:, obs].T
    p = joint.sum(axis=1, keepdims=True)
    ok = p[:, 0] >= bel.IMPOSSIBLE
    out = pred / np.maximum(pred.sum(axis=1, keepdims=True), 1e-300)
    out[ok] = joint[ok] / p[ok]
    return out
