"""Labeled POMDPs, horizon models, simulation and the JSON model format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import ModelError, NegativeConstraintReward, NonTermination, NotStochastic, SchemaError

STOCH_TOL = 1e-9
DEFAULT_STEP_CAP = 100_000
FORMAT_VERSION = 1


# -- horizons ------------------------------------------------------------------


@dataclass(frozen=True)
class Fixed:
    T: int

    def __post_init__(self):
        if self.T < 0:
            raise ModelError("fixed horizon must be nonnegative")


@dataclass(frozen=True)
class Geometric:
    """Stop after step t with probability 1 - gamma, independently of the past."""

    gamma: float

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ModelError("continuation probability must lie in (0, 1)")


@dataclass(frozen=True)
class GoalSet:
    """Stop at the first time the state is in ``goals``."""

    goals: tuple
    step_cap: int = DEFAULT_STEP_CAP

    def __post_init__(self):
        object.__setattr__(self, "goals", tuple(sorted(int(g) for g in self.goals)))


Horizon = Fixed | Geometric | GoalSet


@dataclass(frozen=True)
class RewardBounds:
    T_max: float
    R_max: float
    R_m: float

    @property
    def G(self) -> float:
        return max(self.R_max, 1.0)


# -- model ---------------------------------------------------------------------


@dataclass(eq=False)
class LabeledPomdp:
    """Finite POMDP with a labeling function and two reward channels.

    Arrays are time-invariant (``P[u, s, s']``, ``Z[s, o]``, ``ro[s, u]``,
    ``rc[s, u]``) or carry a leading time axis of length ``T + 1`` for a fixed
    horizon.  ``labels[s]`` is the letter (atom bitset) of state ``s``.
    """

    P: np.ndarray
    Z: np.ndarray
    init: np.ndarray
    labels: np.ndarray
    ro: np.ndarray
    rc: np.ndarray
    horizon: Horizon
    atoms: tuple = ()
    state_names: tuple | None = None
    action_names: tuple | None = None
    obs_names: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.Z = np.asarray(self.Z, dtype=float)
        self.init = np.asarray(self.init, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.ro = np.asarray(self.ro, dtype=float)
        self.rc = np.asarray(self.rc, dtype=float)
        self.atoms = tuple(self.atoms)
        tv = self.P.ndim == 4
        if tv and not isinstance(self.horizon, Fixed):
            raise ModelError("time-varying arrays need a fixed horizon")
        S = self.init.shape[0]
        U = self.P.shape[-3]
        O = self.Z.shape[-1]
        shapes = {
            "P": (self.P, (U, S, S)),
            "Z": (self.Z, (S, O)),
            "ro": (self.ro, (S, U)),
            "rc": (self.rc, (S, U)),
        }
        for name, (arr, shape) in shapes.items():
            want = ((self.horizon.T + 1,) + shape) if tv else shape
            if arr.shape != want:
                raise ModelError(f"{name} has shape {arr.shape}, expected {want}")
        if self.labels.shape != (S,):
            raise ModelError("labels must give one letter per state")
        if self.atoms and self.labels.size and self.labels.max() >= 1 << len(self.atoms):
            raise ModelError("labels use atoms beyond the atom table")

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
        return self.P.ndim == 3

    def _at(self, arr, t):
        if self.time_invariant:
            return arr
        return arr[min(t, arr.shape[0] - 1)]

    def P_at(self, t: int) -> np.ndarray:
        return self._at(self.P, t)

    def Z_at(self, t: int) -> np.ndarray:
        return self._at(self.Z, t)

    def ro_at(self, t: int) -> np.ndarray:
        return self._at(self.ro, t)

    def rc_at(self, t: int) -> np.ndarray:
        return self._at(self.rc, t)

    def with_horizon(self, horizon: Horizon) -> "LabeledPomdp":
        return LabeledPomdp(self.P, self.Z, self.init, self.labels, self.ro, self.rc, horizon,
                            self.atoms, self.state_names, self.action_names, self.obs_names,
                            dict(self.meta))


def _check_rows(arr: np.ndarray, what: str):
    sums = arr.sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) > STOCH_TOL)
    if (arr < -STOCH_TOL).any():
        bad = np.argwhere((arr < -STOCH_TOL).any(axis=-1))
    if len(bad):
        raise NotStochastic(what, tuple(int(i) for i in bad[0]))


def validate(m: LabeledPomdp) -> RewardBounds:
    """Check stochasticity and return the horizon/reward bounds."""
    _check_rows(m.P, "transition")
    _check_rows(m.Z, "observation")
    _check_rows(m.init[None, :], "initial distribution")
    if not (np.isfinite(m.ro).all() and np.isfinite(m.rc).all()):
        raise ModelError("rewards must be finite")
    h = m.horizon
    ro_max = float(m.ro.max()) if m.ro.size else 0.0
    if isinstance(h, Geometric):
        if (m.rc < 0).any():
            raise NegativeConstraintReward("a geometric horizon needs nonnegative constraint rewards")
        scale = 1.0 / (1.0 - h.gamma)
        return RewardBounds(h.gamma * scale, float(m.rc.max(initial=0.0)) * scale, ro_max * scale)
    if isinstance(h, Fixed):
        steps = h.T + 1
        return RewardBounds(float(h.T), steps * float(np.abs(m.rc).max(initial=0.0)), steps * ro_max)
    # goal models: every run collects at least one stage reward
    cap = h.step_cap
    r_m = ro_max if ro_max < 0 else cap * ro_max
    return RewardBounds(float(cap), cap * float(np.abs(m.rc).max(initial=0.0)), r_m)


# -- policies and simulation ---------------------------------------------------


class Policy(Protocol):
    """Pure policy as a deterministic controller over the information history."""

    def start(self, obs: int): ...

    def action(self, node) -> int: ...

    def advance(self, node, action: int, obs: int): ...


class HistoryPolicy:
    """Pure policy given as ``fn(observations, actions) -> action``."""

    def __init__(self, fn):
        self.fn = fn

    def start(self, obs):
        return ((obs,), ())

    def action(self, node):
        return int(self.fn(*node))

    def advance(self, node, action, obs):
        return (node[0] + (obs,), node[1] + (action,))


class OpenLoopPolicy:
    """Fixed action sequence; the last action repeats past its end."""

    def __init__(self, actions: Sequence[int]):
        self.actions = tuple(int(a) for a in actions)

    def start(self, obs):
        return 0

    def action(self, node):
        return self.actions[min(node, len(self.actions) - 1)]

    def advance(self, node, action, obs):
        return node + 1


@dataclass
class Trajectory:
    states: list  # S_0 .. S_{T+1}
    actions: list  # U_0 .. U_T
    observations: list  # O_0 .. O_T
    letters: list  # L(S_0) .. L(S_T)

    @property
    def T(self) -> int:
        return len(self.actions) - 1

    def total(self, r: np.ndarray) -> float:
        return float(sum(r[s, u] for s, u in zip(self.states, self.actions)))


def _draw(rng: np.random.Generator, cum: np.ndarray) -> int:
    # inverse-CDF draw from a cumulative row
    return min(int(cum.searchsorted(rng.random() * cum[-1], side="right")), cum.size - 1)


def _cumulative(m: LabeledPomdp):
    cache = m.__dict__.get("_cum")
    if cache is None:
        cache = (np.cumsum(m.P, axis=-1), np.cumsum(m.Z, axis=-1), np.cumsum(m.init))
        m.__dict__["_cum"] = cache
    return cache


def simulate(m: LabeledPomdp, policy: Policy, rng=None, step_cap: int | None = None) -> Trajectory:
    """Sample one run ``(S_t, U_t, O_t)`` for ``t = 0..T`` plus the terminal state."""
    rng = np.random.default_rng(rng)
    h = m.horizon
    cap = step_cap if step_cap is not None else getattr(h, "step_cap", DEFAULT_STEP_CAP)
    goals = set(h.goals) if isinstance(h, GoalSet) else set()
    cP, cZ, c0 = _cumulative(m)
    tv = not m.time_invariant
    last = cP.shape[0] - 1 if tv else 0
    s = _draw(rng, c0)
    o = _draw(rng, (cZ[0] if tv else cZ)[s])
    node = policy.start(o)
    states, actions, obs, letters = [s], [], [o], [int(m.labels[s])]
    t = 0
    while True:
        u = int(policy.action(node))
        actions.append(u)
        s_next = _draw(rng, (cP[min(t, last)] if tv else cP)[u, s])
        if isinstance(h, Fixed):
            stop = t >= h.T
        elif isinstance(h, Geometric):
            stop = rng.random() < 1.0 - h.gamma
        else:
            stop = s in goals
        if stop:
            states.append(s_next)
            return Trajectory(states, actions, obs, letters)
        t += 1
        if t > cap:
            raise NonTermination(f"run exceeded {cap} steps without reaching a goal")
        s = s_next
        o = _draw(rng, (cZ[min(t, last)] if tv else cZ)[s])
        node = policy.advance(node, u, o)
        states.append(s)
        obs.append(o)
        letters.append(int(m.labels[s]))


def label_word(traj: Trajectory) -> list[int]:
    """Letters ``L(S_0) .. L(S_T)``."""
    return list(traj.letters)


# -- JSON format ---------------------------------------------------------------


def _names(spec, what):
    if isinstance(spec, int):
        return None, spec
    if isinstance(spec, list) and all(isinstance(x, str) for x in spec):
        return tuple(spec), len(spec)
    raise SchemaError(f"{what} must be a count or a list of names")


def _index(name_map, key, what):
    if isinstance(key, int):
        return key
    if name_map is None or key not in name_map:
        raise SchemaError(f"unknown {what} {key!r}")
    return name_map[key]


def _dense_or_sparse(spec, shape, what, maps):
    arr = np.zeros(shape)
    if spec is None:
        return arr
    if isinstance(spec, (int, float)):
        arr[...] = spec
        return arr
    try:
        dense = np.asarray(spec, dtype=float)
        if dense.shape == shape:
            return dense
    except (ValueError, TypeError):
        pass
    if not isinstance(spec, list):
        raise SchemaError(f"{what}: expected a dense array or a list of entries")
    for entry in spec:
        if not isinstance(entry, list) or len(entry) != len(shape) + 1:
            raise SchemaError(f"{what}: bad entry {entry!r}")
        idx = tuple(_index(mp, k, w) for (mp, w), k in zip(maps, entry[:-1]))
        arr[idx] += float(entry[-1])
    return arr


def model_from_dict(data: dict) -> LabeledPomdp:
    try:
        if data.get("version", FORMAT_VERSION) != FORMAT_VERSION:
            raise SchemaError(f"unsupported model version {data.get('version')}")
        state_names, S = _names(data["states"], "states")
        action_names, U = _names(data["actions"], "actions")
        obs_names, O = _names(data["observations"], "observations")
        atoms = tuple(data.get("atoms", ()))
        smap = {n: i for i, n in enumerate(state_names)} if state_names else None
        amap = {n: i for i, n in enumerate(action_names)} if action_names else None
        omap = {n: i for i, n in enumerate(obs_names)} if obs_names else None
        amap_atoms = {n: i for i, n in enumerate(atoms)}
        labels = np.zeros(S, dtype=np.int64)
        for key, names in (data.get("labels") or {}).items():
            s = _index(smap, int(key) if key.isdigit() else key, "state")
            for n in names:
                if n not in amap_atoms:
                    raise SchemaError(f"label uses unknown atom {n!r}")
                labels[s] |= 1 << amap_atoms[n]
        # transitions entries are [s, u, s', p]; stored as P[u, s, s']
        T = _dense_or_sparse(data["transitions"], (S, U, S), "transitions",
                             [(smap, "state"), (amap, "action"), (smap, "state")])
        P = T.transpose(1, 0, 2)
        Z = _dense_or_sparse(data["observation_fn"], (S, O), "observation_fn",
                             [(smap, "state"), (omap, "observation")])
        init = _dense_or_sparse(data["init"], (S,), "init", [(smap, "state")])
        ro = _dense_or_sparse(data.get("reward_objective"), (S, U), "reward_objective",
                              [(smap, "state"), (amap, "action")])
        rc = _dense_or_sparse(data.get("reward_constraint"), (S, U), "reward_constraint",
                              [(smap, "state"), (amap, "action")])
        h = data["horizon"]
        if h["type"] == "fixed":
            horizon = Fixed(int(h["T"]))
        elif h["type"] == "geometric":
            horizon = Geometric(float(h["gamma"]))
        elif h["type"] == "goal":
            horizon = GoalSet(tuple(_index(smap, g, "state") for g in h["goals"]),
                              int(h.get("step_cap", DEFAULT_STEP_CAP)))
        else:
            raise SchemaError(f"unknown horizon type {h['type']!r}")
    except KeyError as e:
        raise SchemaError(f"missing field {e.args[0]!r}") from None
    return LabeledPomdp(P, Z, init, labels, ro, rc, horizon, atoms, state_names, action_names,
                        obs_names, dict(data.get("meta", {})))


def _sparse(arr: np.ndarray, tol=0.0):
    return [[*map(int, idx), float(arr[idx])] for idx in zip(*np.nonzero(np.abs(arr) > tol))]


def model_to_dict(m: LabeledPomdp) -> dict:
    if not m.time_invariant:
        raise ModelError("the JSON format stores time-invariant models only")
    h = m.horizon
    if isinstance(h, Fixed):
        hd = {"type": "fixed", "T": h.T}
    elif isinstance(h, Geometric):
        hd = {"type": "geometric", "gamma": h.gamma}
    else:
        hd = {"type": "goal", "goals": list(h.goals), "step_cap": h.step_cap}
    labels = {}
    for s in range(m.n_states):
        names = [a for i, a in enumerate(m.atoms) if m.labels[s] >> i & 1]
        if names:
            labels[str(s)] = names
    out = {
        "version": FORMAT_VERSION,
        "states": list(m.state_names) if m.state_names else m.n_states,
        "actions": list(m.action_names) if m.action_names else m.n_actions,
        "observations": list(m.obs_names) if m.obs_names else m.n_obs,
        "atoms": list(m.atoms),
        "labels": labels,
        "transitions": _sparse(m.P.transpose(1, 0, 2)),
        "observation_fn": _sparse(m.Z),
        "init": _sparse(m.init),
        "reward_objective": _sparse(m.ro),
        "reward_constraint": _sparse(m.rc),
        "horizon": hd,
    }
    if m.meta:
        out["meta"] = m.meta
    return out


def load_model(path) -> LabeledPomdp:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_model(m: LabeledPomdp, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(m), fh, indent=1)
