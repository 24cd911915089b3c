"""Control-sharing multi-agent models, the factored product and the coordinator POMDP.

The shared state and all past joint actions are common knowledge; each agent
also sees its own local state.  Joint actions are flat indices over
``U^1 x ... x U^N`` with agent 1 most significant, and joint local states are
flat indices over ``S^1 x ... x S^N`` in the same order.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import BlowUp, ModelError, SchemaError
from .ltlf import AtomTable, Dfa, compile_spec, parse_spec
from .model import (
    DEFAULT_STEP_CAP, FORMAT_VERSION, Fixed, Geometric, GoalSet, Horizon, LabeledPomdp, _check_rows,
    _dense_or_sparse, _draw, _index, _names, validate,
)
from .product import ProductPomdp, encode_letters

PRIVATE_CAP = 64
PRESCRIPTION_CAP = 4096
CELL_CAP = 50_000_000


# -- model ---------------------------------------------------------------------


@dataclass(eq=False)
class MaModel:
    """``P[u, s, s']`` shared kernel, ``local_P[i][u, s, s^i, s^i']`` local kernels.

    ``init`` is a distribution over ``(s, s^1, .., s^N)``; ``ro`` and ``rc``
    have shape ``(S, S^1, .., S^N, U)``.  ``shared_labels[s]`` is a letter
    over ``shared_atoms`` and ``local_labels[i][s, s^i]`` one over
    ``local_atoms[i]``.
    """

    P: np.ndarray
    local_P: tuple
    agent_actions: tuple
    init: np.ndarray
    shared_labels: np.ndarray
    local_labels: tuple
    ro: np.ndarray
    horizon: Horizon
    rc: np.ndarray | None = None
    shared_atoms: tuple = ()
    local_atoms: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.local_P = tuple(np.asarray(k, dtype=float) for k in self.local_P)
        self.agent_actions = tuple(int(n) for n in self.agent_actions)
        self.init = np.asarray(self.init, dtype=float)
        self.shared_labels = np.asarray(self.shared_labels, dtype=np.int64)
        self.local_labels = tuple(np.asarray(x, dtype=np.int64) for x in self.local_labels)
        self.ro = np.asarray(self.ro, dtype=float)
        self.rc = np.zeros_like(self.ro) if self.rc is None else np.asarray(self.rc, dtype=float)
        self.shared_atoms = tuple(self.shared_atoms)
        if not self.local_atoms:
            self.local_atoms = ((),) * len(self.local_P)
        self.local_atoms = tuple(tuple(a) for a in self.local_atoms)
        N = len(self.local_P)
        if N < 1 or len(self.agent_actions) != N or len(self.local_labels) != N or len(self.local_atoms) != N:
            raise ModelError("every agent needs actions, a local kernel, local labels and local atoms")
        U, S = self.n_actions, self.P.shape[-1]
        if self.P.shape != (U, S, S):
            raise ModelError(f"P has shape {self.P.shape}, expected {(U, S, S)}")
        for i, k in enumerate(self.local_P):
            n = k.shape[-1]
            if k.shape != (U, S, n, n):
                raise ModelError(f"local kernel {i} has shape {k.shape}, expected {(U, S, n, n)}")
            if self.local_labels[i].shape != (S, n):
                raise ModelError(f"local labels {i} must have shape {(S, n)}")
        bar = (S,) + self.local_sizes
        if self.init.shape != bar:
            raise ModelError(f"init has shape {self.init.shape}, expected {bar}")
        for name in ("ro", "rc"):
            if getattr(self, name).shape != bar + (U,):
                raise ModelError(f"{name} must have shape {bar + (U,)}")
        if self.shared_labels.shape != (S,):
            raise ModelError("shared labels must give one letter per shared state")
        names = list(self.joint_atoms)
        if len(set(names)) != len(names):
            raise ModelError("shared and local atom names must be distinct")
        if isinstance(self.horizon, GoalSet) and any(g >= S for g in self.horizon.goals):
            raise ModelError("goal states must be shared states")

    @property
    def N(self) -> int:
        return len(self.local_P)

    @property
    def n_shared(self) -> int:
        return self.P.shape[-1]

    @property
    def local_sizes(self) -> tuple:
        return tuple(k.shape[-1] for k in self.local_P)

    @property
    def n_actions(self) -> int:
        return int(np.prod(self.agent_actions))

    @property
    def joint_atoms(self) -> tuple:
        return self.shared_atoms + tuple(a for loc in self.local_atoms for a in loc)

    def joint_action(self, parts: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(parts), self.agent_actions))

    def split_action(self, u: int) -> tuple:
        return tuple(int(x) for x in np.unravel_index(int(u), self.agent_actions))

    def joint_labels(self) -> np.ndarray:
        """Letters over ``joint_atoms`` indexed by ``(s, s^1, .., s^N)``."""
        S = self.n_shared
        out = np.broadcast_to(self.shared_labels.reshape((S,) + (1,) * self.N),
                              (S,) + self.local_sizes).copy()
        shift = len(self.shared_atoms)
        for i, lab in enumerate(self.local_labels):
            shape = [S] + [1] * self.N
            shape[i + 1] = self.local_sizes[i]
            out |= lab.reshape(shape) << shift
            shift += len(self.local_atoms[i])
        return out

    def joint_kernel(self) -> np.ndarray:
        """``K[u, s, l, s', l']`` over flat joint local states ``l``."""
        U, S = self.n_actions, self.n_shared
        loc = np.ones((U, S, 1, 1))
        for k in self.local_P:
            loc = np.einsum("usab,uscd->usacbd", loc, k).reshape(U, S, loc.shape[2] * k.shape[2], -1)
        return self.P[:, :, None, :, None] * loc[:, :, :, None, :]


def validate_ma(m: MaModel):
    """Check stochasticity of all kernels and return reward bounds."""
    _check_rows(m.P, "shared transition")
    for i, k in enumerate(m.local_P):
        _check_rows(k, f"local transition {i}")
    _check_rows(m.init.reshape(1, -1), "initial distribution")
    return validate(centralized(m))


def centralized(m: MaModel) -> LabeledPomdp:
    """Single-agent view over ``s_bar = (s, s^1, .., s^N)`` observing the shared state."""
    S, L = m.n_shared, int(np.prod(m.local_sizes))
    K = m.joint_kernel().reshape(m.n_actions, S * L, S * L)
    Z = np.repeat(np.eye(S), L, axis=0)
    horizon = m.horizon
    if isinstance(horizon, GoalSet):
        goals = [s * L + l for s in horizon.goals for l in range(L)]
        horizon = GoalSet(tuple(goals), horizon.step_cap)
    return LabeledPomdp(K, Z, m.init.reshape(-1), m.joint_labels().reshape(-1),
                        m.ro.reshape(S * L, -1), m.rc.reshape(S * L, -1), horizon, m.joint_atoms,
                        meta=dict(m.meta))


# -- specifications ------------------------------------------------------------


@dataclass(frozen=True)
class SpecBundle:
    """Shared DFA over the shared atoms and one local DFA per agent."""

    shared: Dfa
    local: tuple
    texts: tuple | None = None  # (shared, local_1, .., local_N) source texts

    @classmethod
    def compile(cls, m: MaModel, shared: str = "true", local: Sequence[str] | None = None) -> "SpecBundle":
        local = list(local) if local is not None else ["true"] * m.N
        if len(local) != m.N:
            raise ValueError("need one local specification per agent")
        g = compile_spec(shared, AtomTable(m.shared_atoms))
        loc = tuple(compile_spec(t, AtomTable(a)) for t, a in zip(local, m.local_atoms))
        return cls(g, loc, (shared, *local))

    def conjunction(self) -> str:
        if self.texts is None:
            raise ValueError("bundle was built without source texts")
        return " & ".join(f"({t})" for t in self.texts)

    def formula(self, m: MaModel):
        """The conjunction parsed over ``m.joint_atoms``."""
        return parse_spec(self.conjunction(), AtomTable(m.joint_atoms, sealed=True))


# -- factored product ----------------------------------------------------------


@dataclass(eq=False)
class MaProduct:
    """Factored product state ``(s, q^g, s^1, q^1, .., s^N, q^N)``.

    ``shared_step[q, s]`` is the next shared DFA state after reading
    ``L^g(s)``; ``local_step[i][q, s, s^i]`` reads ``L^i(s, s^i)``.
    """

    model: MaModel
    specs: SpecBundle
    shared_step: np.ndarray
    local_step: tuple

    @property
    def n_qg(self) -> int:
        return self.specs.shared.n_states

    @property
    def local_q(self) -> tuple:
        return tuple(d.n_states for d in self.specs.local)

    @property
    def private_sizes(self) -> tuple:
        """``|S^i| |Q^i|`` per agent; private index is ``s^i * |Q^i| + q^i``."""
        return tuple(n * q for n, q in zip(self.model.local_sizes, self.local_q))

    def accepting(self, qg: int, qs: Sequence[int]) -> bool:
        return qg in self.specs.shared.accepting and all(
            q in d.accepting for q, d in zip(qs, self.specs.local))

    def private_kernel(self) -> np.ndarray:
        """``K[u, s, j, j']`` over flat joint private indices ``j``."""
        m = self.model
        U, S = m.n_actions, m.n_shared
        out = np.ones((U, S, 1, 1))
        for k, step, nq in zip(m.local_P, self.local_step, self.local_q):
            n = k.shape[-1]
            a = np.zeros((U, S, n, nq, n, nq))
            for q in range(nq):
                for s in range(S):
                    for si in range(n):
                        a[:, s, si, q, :, step[q, s, si]] = k[:, s, si, :]
            a = a.reshape(U, S, n * nq, n * nq)
            out = np.einsum("usab,uscd->usacbd", out, a).reshape(U, S, out.shape[2] * a.shape[2], -1)
        return out

    def initial_private(self, locals_: Sequence[int]) -> int:
        idx = [si * nq + d.initial for si, nq, d in zip(locals_, self.local_q, self.specs.local)]
        return int(np.ravel_multi_index(idx, self.private_sizes))

    def split_private(self, j: int) -> list[tuple[int, int]]:
        parts = np.unravel_index(int(j), self.private_sizes)
        return [divmod(int(p), nq) for p, nq in zip(parts, self.local_q)]

    def flat(self) -> ProductPomdp:
        """Centralized product over ``x = (s, q^g, j)`` observing the shared state."""
        m = self.model
        U, S, Qg = m.n_actions, m.n_shared, self.n_qg
        J = int(np.prod(self.private_sizes))
        Kp = self.private_kernel()
        P = np.zeros((U, S, Qg, J, S, Qg, J))
        for s in range(S):
            for q in range(Qg):
                P[:, s, q, :, :, self.shared_step[q, s], :] = (
                    m.P[:, s, None, :, None] * Kp[:, s, :, None, :])
        X = S * Qg * J
        P = P.reshape(U, X, X)
        init = np.zeros((S, Qg, J))
        letters = m.joint_labels()
        labels = np.zeros((S, Qg, J), dtype=np.int64)
        ro = np.zeros((S, Qg, J, U))
        rc = np.zeros((S, Qg, J, U))
        rf = np.zeros((S, Qg, J))
        for j in range(J):
            priv = self.split_private(j)
            loc = tuple(si for si, _ in priv)
            qs = [q for _, q in priv]
            labels[:, :, j] = letters[(slice(None),) + loc][:, None]
            ro[:, :, j] = m.ro[(slice(None),) + loc][:, None]
            rc[:, :, j] = m.rc[(slice(None),) + loc][:, None]
            for qg in range(Qg):
                rf[:, qg, j] = float(self.accepting(qg, qs))
            if all(q == d.initial for q, d in zip(qs, self.specs.local)):
                init[:, self.specs.shared.initial, j] = m.init[(slice(None),) + loc]
        Z = np.repeat(np.eye(S), Qg * J, axis=0)
        horizon = m.horizon
        if isinstance(horizon, GoalSet):
            horizon = GoalSet(tuple(s * Qg * J + r for s in horizon.goals for r in range(Qg * J)),
                              horizon.step_cap)
        pairs = np.stack([np.repeat(np.arange(S), Qg * J), np.tile(np.arange(Qg * J), S)], axis=1)
        p = ProductPomdp(P, Z, init.reshape(-1), labels.reshape(-1), ro.reshape(X, U), rc.reshape(X, U),
                         horizon, m.joint_atoms, meta=dict(m.meta), rf=rf.reshape(-1), n_q=Qg * J,
                         pairs=pairs, dfa=None, base=centralized(m))
        p.bounds = validate(p)
        return p


def build_ma_product(m: MaModel, b: SpecBundle) -> MaProduct:
    """Shared DFA driven by ``L^g(s)``, local DFA ``i`` by ``L^i(s, s^i)``."""
    validate_ma(m)
    if len(b.local) != m.N:
        raise ValueError("need one local automaton per agent")
    g = encode_letters(m.shared_labels, m.shared_atoms, b.shared)
    shared_step = b.shared.letter_table(g)
    local_step = []
    for lab, atoms, d in zip(m.local_labels, m.local_atoms, b.local):
        letters = encode_letters(lab, atoms, d)
        local_step.append(d.letter_table(letters.reshape(-1)).reshape((d.n_states,) + lab.shape))
    return MaProduct(m, b, shared_step, tuple(local_step))


# -- coordinator ---------------------------------------------------------------


@dataclass(eq=False)
class CoordinatorPomdp(ProductPomdp):
    """Coordinator over hidden states ``(s, q^g, j, u_prev)``.

    Action ``a`` is a joint prescription; ``tables[i][k]`` is agent ``i``'s
    prescription ``k`` (an action per private index) and ``a`` is the flat
    index of ``(k_1, .., k_N)``.  The observation at time ``t`` is
    ``(S_t, U_{t-1})`` with ``U_{-1}`` the sentinel ``n_actions``.
    """

    fp: MaProduct = None
    states: np.ndarray = None  # rows (s, q^g, j, u_prev)
    tables: tuple = None
    joint_u: np.ndarray = None  # joint action of prescription a at private index j

    @property
    def n_prescriptions(self) -> tuple:
        return tuple(len(t) for t in self.tables)

    def prescription(self, a: int) -> tuple:
        ks = np.unravel_index(int(a), self.n_prescriptions)
        return tuple(self.tables[i][int(k)] for i, k in enumerate(ks))

    def agent_table(self, a: int, i: int) -> tuple:
        return self.tables[i][int(np.unravel_index(int(a), self.n_prescriptions)[i])]

    def obs_index(self, s: int, u_prev: int | None) -> int:
        U = self.fp.model.n_actions
        return int(s) * (U + 1) + (U if u_prev is None else int(u_prev))

    def decode(self, x: int) -> tuple:
        """``(s, q^g, [(s^i, q^i)], u_prev)``; ``u_prev`` is None at the start."""
        s, qg, j, up = (int(v) for v in self.states[x])
        return s, qg, self.fp.split_private(j), (None if up == self.fp.model.n_actions else up)


def build_coordinator(
    fp: MaProduct,
    private_cap: int = PRIVATE_CAP,
    prescription_cap: int = PRESCRIPTION_CAP,
    cell_cap: int = CELL_CAP,
) -> CoordinatorPomdp:
    """Common-information reformulation with explicit prescription tables.

    Only states reachable from the initial support are kept.  Raises BlowUp
    when the joint private space, the prescription space or the dense kernel
    exceed their caps.
    """
    m = fp.model
    U, S = m.n_actions, m.n_shared
    sizes = fp.private_sizes
    J = int(np.prod(sizes))
    if J > private_cap:
        raise BlowUp(f"{J} joint private states exceed the cap {private_cap}", J, private_cap)
    counts = [ui ** n for ui, n in zip(m.agent_actions, sizes)]
    A = int(np.prod([float(c) for c in counts]))
    if A > prescription_cap:
        raise BlowUp(f"{A} joint prescriptions exceed the cap {prescription_cap}", A, prescription_cap)
    tables = tuple(tuple(itertools.product(range(ui), repeat=n)) for ui, n in zip(m.agent_actions, sizes))
    ks = np.unravel_index(np.arange(A), counts)
    ps = np.unravel_index(np.arange(J), sizes)
    joint_u = np.zeros((A, J), dtype=np.int64)
    stride = 1
    for i in reversed(range(m.N)):
        tab = np.asarray(tables[i], dtype=np.int64)
        joint_u += tab[ks[i][:, None], ps[i][None, :]] * stride
        stride *= m.agent_actions[i]
    Kp = fp.private_kernel()

    index: dict = {}
    states: list = []
    init: dict = {}
    for idx in zip(*np.nonzero(m.init)):
        s, loc = int(idx[0]), idx[1:]
        key = (s, fp.specs.shared.initial, fp.initial_private(loc), U)
        if key not in index:
            index[key] = len(states)
            states.append(key)
        init[index[key]] = init.get(index[key], 0.0) + float(m.init[idx])
    succ: dict = {}
    head = 0
    while head < len(states):
        s, qg, j, _ = states[head]
        qn = int(fp.shared_step[qg, s])
        for u in np.unique(joint_u[:, j]).tolist():
            ss, jj = np.nonzero(m.P[u, s][:, None] * Kp[u, s, j][None, :])
            probs = m.P[u, s, ss] * Kp[u, s, j, jj]
            targets = []
            for a, b in zip(ss.tolist(), jj.tolist()):
                key = (a, qn, b, u)
                if key not in index:
                    index[key] = len(states)
                    states.append(key)
                targets.append(index[key])
            succ[head, u] = (np.array(targets, dtype=np.int64), probs)
        head += 1
    X = len(states)
    if A * X * X > cell_cap:
        raise BlowUp(f"coordinator kernel needs {A * X * X} cells, cap is {cell_cap}", A * X * X, cell_cap)

    P = np.zeros((A, X, X))
    for (x, u), (targets, probs) in succ.items():
        rows = np.flatnonzero(joint_u[:, states[x][2]] == u)
        P[np.ix_(rows, [x], targets)] = probs[None, None, :]
    st = np.array(states, dtype=np.int64)
    n_obs = S * (U + 1)
    Z = np.zeros((X, n_obs))
    Z[np.arange(X), st[:, 0] * (U + 1) + st[:, 3]] = 1.0
    letters = m.joint_labels()
    ro, rc = np.zeros((X, A)), np.zeros((X, A))
    labels = np.zeros(X, dtype=np.int64)
    rf = np.zeros(X)
    for x, (s, qg, j, _) in enumerate(states):
        priv = fp.split_private(j)
        at = (s,) + tuple(si for si, _ in priv)
        labels[x] = letters[at]
        ro[x] = m.ro[at][joint_u[:, j]]
        rc[x] = m.rc[at][joint_u[:, j]]
        rf[x] = float(fp.accepting(qg, [q for _, q in priv]))
    p0 = np.zeros(X)
    for x, w in init.items():
        p0[x] = w
    horizon = m.horizon
    if isinstance(horizon, GoalSet):
        goals = set(horizon.goals)
        horizon = GoalSet(tuple(x for x in range(X) if states[x][0] in goals), horizon.step_cap)
    pairs = np.stack([np.arange(X), np.zeros(X, dtype=np.int64)], axis=1)
    cp = CoordinatorPomdp(P, Z, p0, labels, ro, rc, horizon, m.joint_atoms, meta=dict(m.meta), rf=rf,
                          n_q=1, pairs=pairs, dfa=None, base=centralized(m), fp=fp, states=st,
                          tables=tables, joint_u=joint_u)
    cp.bounds = validate(cp)
    return cp


# -- agent-side execution ------------------------------------------------------


class AgentPolicy:
    """Agent ``i``'s executor for a coordinator policy.

    The agent replays the coordinator's controller on the common information
    and applies its own part of the chosen prescription to ``(s^i, q^i)``.
    Mixed coordinator policies draw their pure component from the run seed,
    which all agents share.
    """

    def __init__(self, coord: CoordinatorPomdp, policy, i: int):
        self.coord, self.policy, self.i = coord, policy, int(i)
        self.fp = coord.fp

    def reset(self, s: int, si: int, seed=None):
        pol = self.policy
        if hasattr(pol, "sample"):
            pol = pol.sample(seed)
        self.pure = pol
        self.node = pol.start(self.coord.obs_index(s, None))
        self.s, self.si = int(s), int(si)
        self.q = self.fp.specs.local[self.i].initial

    def act(self) -> int:
        a = int(self.pure.action(self.node))
        self.a = a
        table = self.coord.agent_table(a, self.i)
        return int(table[self.si * self.fp.local_q[self.i] + self.q])

    def observe(self, u: int, s_next: int, si_next: int):
        self.q = int(self.fp.local_step[self.i][self.q, self.s, self.si])
        self.node = self.pure.advance(self.node, self.a, self.coord.obs_index(s_next, u))
        self.s, self.si = int(s_next), int(si_next)


def unpack_policy(coord: CoordinatorPomdp, policy, i: int) -> AgentPolicy:
    return AgentPolicy(coord, policy, i)


class TeamRun(NamedTuple):
    shared: list  # S_0 .. S_{T+1}
    local: list  # (S^1_t, .., S^N_t) for t = 0 .. T+1
    actions: list  # joint U_0 .. U_T

    @property
    def T(self) -> int:
        return len(self.actions) - 1

    def key(self) -> tuple:
        return tuple(self.shared), tuple(self.local), tuple(self.actions)


def simulate_team(fp: MaProduct, agents: Sequence[AgentPolicy], rng=None, step_cap: int | None = None) -> TeamRun:
    """One run of the original system driven by the agents' own executors.

    The pure component of a mixed policy is drawn from one integer taken from
    ``rng`` and shared by all agents.
    """
    m = fp.model
    rng = np.random.default_rng(rng)
    h = m.horizon
    cap = step_cap if step_cap is not None else getattr(h, "step_cap", DEFAULT_STEP_CAP)
    goals = set(h.goals) if isinstance(h, GoalSet) else set()
    bar = m.init.reshape(-1)
    flat = _draw(rng, np.cumsum(bar))
    idx = np.unravel_index(flat, m.init.shape)
    s, loc = int(idx[0]), [int(v) for v in idx[1:]]
    seed = int(rng.integers(2**63))
    for i, ag in enumerate(agents):
        ag.reset(s, loc[i], seed)
    shared, local, actions = [s], [tuple(loc)], []
    t = 0
    while True:
        u = m.joint_action([ag.act() for ag in agents])
        actions.append(u)
        s_next = _draw(rng, np.cumsum(m.P[u, s]))
        loc_next = [_draw(rng, np.cumsum(k[u, s, si])) for k, si in zip(m.local_P, loc)]
        if isinstance(h, Fixed):
            stop = t >= h.T
        elif isinstance(h, Geometric):
            stop = rng.random() < 1.0 - h.gamma
        else:
            stop = s in goals
        shared.append(s_next)
        local.append(tuple(loc_next))
        if stop:
            return TeamRun(shared, local, actions)
        t += 1
        if t > cap:
            raise BlowUp(f"team run exceeded {cap} steps", t, cap)
        for i, ag in enumerate(agents):
            ag.observe(u, s_next, loc_next[i])
        s, loc = s_next, loc_next


def team_from_coordinator(coord: CoordinatorPomdp, traj) -> TeamRun:
    """Map a simulated coordinator trajectory back to the original system."""
    shared, local, actions = [], [], []
    for t, x in enumerate(traj.states):
        s, _, priv, _ = coord.decode(x)
        shared.append(s)
        local.append(tuple(si for si, _ in priv))
        if t < len(traj.actions):
            actions.append(int(coord.joint_u[traj.actions[t], coord.states[x][2]]))
    return TeamRun(shared, local, actions)


def run_accepts(fp: MaProduct, run: TeamRun) -> bool:
    """Whether every component DFA accepts the run's word ``L(s_bar_0) .. L(s_bar_T)``."""
    qg = fp.specs.shared.initial
    qs = [d.initial for d in fp.specs.local]
    for t in range(run.T + 1):
        s = run.shared[t]
        for i, si in enumerate(run.local[t]):
            qs[i] = int(fp.local_step[i][qs[i], s, si])
        qg = int(fp.shared_step[qg, s])
    return fp.accepting(qg, qs)


def run_word(m: MaModel, run: TeamRun) -> list[int]:
    letters = m.joint_labels()
    return [int(letters[(run.shared[t],) + tuple(run.local[t])]) for t in range(run.T + 1)]


# -- JSON format ---------------------------------------------------------------


def _horizon(h, smap):
    if h["type"] == "fixed":
        return Fixed(int(h["T"]))
    if h["type"] == "geometric":
        return Geometric(float(h["gamma"]))
    if h["type"] == "goal":
        return GoalSet(tuple(_index(smap, g, "state") for g in h["goals"]),
                       int(h.get("step_cap", DEFAULT_STEP_CAP)))
    raise SchemaError(f"unknown horizon type {h['type']!r}")


def ma_from_dict(data: dict) -> tuple[MaModel, SpecBundle | None]:
    """Multi-agent model (and its specification bundle when ``specs`` is present).

    Joint actions in entries are either flat indices or lists of per-agent
    actions.
    """
    try:
        if data.get("version", FORMAT_VERSION) != FORMAT_VERSION:
            raise SchemaError(f"unsupported model version {data.get('version')}")
        snames, S = _names(data["shared_states"], "shared_states")
        smap = {n: i for i, n in enumerate(snames)} if snames else None
        agents = data["agents"]
        acts, lsizes, lmaps, amaps, latoms = [], [], [], [], []
        for ag in agents:
            an, nu = _names(ag["actions"], "actions")
            ln, nl = _names(ag["local_states"], "local_states")
            acts.append(nu)
            lsizes.append(nl)
            amaps.append({n: k for k, n in enumerate(an)} if an else None)
            lmaps.append({n: k for k, n in enumerate(ln)} if ln else None)
            latoms.append(tuple(ag.get("atoms", ())))
        U = int(np.prod(acts))

        def joint(u):
            if isinstance(u, str) and len(agents) == 1:
                u = [u]
            if isinstance(u, list):
                parts = [_index(mp, v, "action") for mp, v in zip(amaps, u)]
                return int(np.ravel_multi_index(parts, acts))
            return int(u)

        def fix_u(entries, pos, shape):
            # dense arrays pass through; sparse entries get flat joint actions
            if entries is None or isinstance(entries, (int, float)):
                return entries
            try:
                if np.asarray(entries, dtype=float).shape == shape:
                    return entries
            except (ValueError, TypeError):
                pass
            return [e[:pos] + [joint(e[pos])] + e[pos + 1:]
                    if isinstance(e, list) and len(e) == len(shape) + 1 else e for e in entries]

        shared_atoms = tuple(data.get("shared_atoms", ()))
        gat = {n: k for k, n in enumerate(shared_atoms)}
        shared_labels = np.zeros(S, dtype=np.int64)
        for key, names in (data.get("shared_label") or {}).items():
            s = _index(smap, int(key) if key.isdigit() else key, "state")
            for n in names:
                if n not in gat:
                    raise SchemaError(f"label uses unknown atom {n!r}")
                shared_labels[s] |= 1 << gat[n]
        P = _dense_or_sparse(fix_u(data["transitions"], 1, (S, U, S)), (S, U, S), "transitions",
                             [(smap, "state"), (None, "action"), (smap, "state")]).transpose(1, 0, 2)
        local_P, local_labels = [], []
        for i, ag in enumerate(agents):
            n = lsizes[i]
            k = _dense_or_sparse(fix_u(ag["local_transitions"], 2, (n, S, U, n)), (n, S, U, n), "local_transitions",
                                 [(lmaps[i], "local state"), (smap, "state"), (None, "action"),
                                  (lmaps[i], "local state")])
            local_P.append(k.transpose(2, 1, 0, 3))
            lab = np.zeros((S, n), dtype=np.int64)
            at = {a: b for b, a in enumerate(latoms[i])}
            for e in ag.get("local_label", []):
                s, si, names = _index(smap, e[0], "state"), _index(lmaps[i], e[1], "local state"), e[2]
                for nm in names:
                    if nm not in at:
                        raise SchemaError(f"local label uses unknown atom {nm!r}")
                    lab[s, si] |= 1 << at[nm]
            local_labels.append(lab)
        bar = (S, *lsizes)
        maps = [(smap, "state")] + [(lm, "local state") for lm in lmaps]
        init = _dense_or_sparse(data["init"], bar, "init", maps)
        ro = _dense_or_sparse(fix_u(data.get("reward_objective"), len(bar), bar + (U,)), bar + (U,), "reward_objective",
                              maps + [(None, "action")])
        rc = _dense_or_sparse(fix_u(data.get("reward_constraint"), len(bar), bar + (U,)), bar + (U,),
                              "reward_constraint", maps + [(None, "action")])
        horizon = _horizon(data["horizon"], smap)
    except KeyError as e:
        raise SchemaError(f"missing field {e.args[0]!r}") from None
    m = MaModel(P, local_P, acts, init, shared_labels, local_labels, ro, horizon, rc, shared_atoms,
                tuple(latoms), dict(data.get("meta", {})))
    specs = data.get("specs")
    bundle = None
    if specs:
        bundle = SpecBundle.compile(m, specs.get("global", "true"), specs.get("local"))
    return m, bundle


def _sparse(arr):
    return [[*map(int, idx), float(arr[idx])] for idx in zip(*np.nonzero(arr))]


def ma_to_dict(m: MaModel, bundle: SpecBundle | None = None) -> dict:
    h = m.horizon
    if isinstance(h, Fixed):
        hd = {"type": "fixed", "T": h.T}
    elif isinstance(h, Geometric):
        hd = {"type": "geometric", "gamma": h.gamma}
    else:
        hd = {"type": "goal", "goals": list(h.goals), "step_cap": h.step_cap}
    agents = []
    for i in range(m.N):
        lab = []
        for s, si in zip(*np.nonzero(m.local_labels[i])):
            lab.append([int(s), int(si), [a for b, a in enumerate(m.local_atoms[i])
                                          if m.local_labels[i][s, si] >> b & 1]])
        agents.append({
            "actions": m.agent_actions[i],
            "local_states": m.local_sizes[i],
            "atoms": list(m.local_atoms[i]),
            "local_transitions": _sparse(m.local_P[i].transpose(2, 1, 0, 3)),
            "local_label": lab,
        })
    out = {
        "version": FORMAT_VERSION,
        "kind": "multiagent",
        "shared_states": m.n_shared,
        "shared_atoms": list(m.shared_atoms),
        "shared_label": {str(s): [a for b, a in enumerate(m.shared_atoms) if m.shared_labels[s] >> b & 1]
                         for s in np.flatnonzero(m.shared_labels)},
        "agents": agents,
        "transitions": _sparse(m.P.transpose(1, 0, 2)),
        "init": _sparse(m.init),
        "reward_objective": _sparse(m.ro),
        "reward_constraint": _sparse(m.rc),
        "horizon": hd,
    }
    if bundle is not None and bundle.texts is not None:
        out["specs"] = {"global": bundle.texts[0], "local": list(bundle.texts[1:])}
    if m.meta:
        out["meta"] = m.meta
    return out


def load_ma(path) -> tuple[MaModel, SpecBundle | None]:
    with open(path) as fh:
        return ma_from_dict(json.load(fh))
