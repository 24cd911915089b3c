"""Random small instances and brute-force reference computations."""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

from ltlfpomdp.ltlf import eval_trace
from ltlfpomdp.model import Fixed, HistoryPolicy, LabeledPomdp


def random_stochastic(rng, shape, sparsity=0.5):
    x = rng.random(shape) * (rng.random(shape) > sparsity)
    # keep every row nonempty
    idx = rng.integers(shape[-1], size=shape[:-1])
    np.put_along_axis(x, idx[..., None], rng.random(shape[:-1])[..., None] + 0.1, axis=-1)
    return x / x.sum(axis=-1, keepdims=True)


def random_pomdp(rng, S=3, U=2, O=2, T=2, atoms=("a", "b"), full_obs=False, rc_sign=0,
                 time_varying=False) -> LabeledPomdp:
    lead = (T + 1,) if time_varying else ()
    P = random_stochastic(rng, lead + (U, S, S))
    if full_obs:
        Z = np.broadcast_to(np.eye(S), lead + (S, S)).copy()
    else:
        Z = random_stochastic(rng, lead + (S, O), 0.3)
    init = random_stochastic(rng, (S,), 0.3)
    labels = rng.integers(1 << len(atoms), size=S)
    ro = np.round(rng.random(lead + (S, U)), 3)
    rc = np.round(rng.random(lead + (S, U)) - (0.5 if rc_sign < 0 else 0.0), 3)
    return LabeledPomdp(P, Z, init, labels, ro, rc, Fixed(T), atoms)


def random_small_spec(rng, atoms, max_states=3, depth=3):
    """Random formula whose minimal automaton has between 2 and ``max_states`` states."""
    from helpers import random_formula
    from ltlfpomdp.ltlf import compile_dfa

    while True:
        phi = random_formula(rng, depth, len(atoms))
        d = compile_dfa(phi, list(atoms))
        if 2 <= d.n_states <= max_states:
            return phi, d


def product_case(rng):
    """Random tiny model, small spec and pure policy (|S| <= 4, |Q| <= 3, T <= 3)."""
    S = int(rng.integers(2, 5))
    T = int(rng.integers(0, 4))
    m = random_pomdp(rng, S=S, U=2, O=2, T=T, time_varying=bool(rng.random() < 0.3), rc_sign=-1)
    phi, d = random_small_spec(rng, m.atoms)
    return m, phi, d, random_history_policy(rng, m, T)


def random_history_policy(rng, m: LabeledPomdp, T: int) -> HistoryPolicy:
    """Deterministic table over all observation histories of length <= T+1."""
    table = {}
    for t in range(T + 1):
        for hist in itertools.product(range(m.n_obs), repeat=t + 1):
            table[hist] = int(rng.integers(m.n_actions))
    return HistoryPolicy(lambda obs, acts: table[tuple(obs)])


def enumerate_base(m: LabeledPomdp, policy, phi, atoms) -> dict:
    """Exact channel values on the base model by enumerating every run.

    Satisfaction is decided by evaluating ``phi`` on the label word directly,
    without any automaton.
    """
    T = m.horizon.T
    out = {"objective": 0.0, "constraint": 0.0, "accept": 0.0}

    def go(t, s, node, prob, word, ro_sum, rc_sum):
        u = int(policy.action(node))
        ro_sum += m.ro_at(t)[s, u]
        rc_sum += m.rc_at(t)[s, u]
        word = word + [int(m.labels[s])]
        if t == T:
            out["objective"] += prob * ro_sum
            out["constraint"] += prob * rc_sum
            if eval_trace(phi, word, atoms):
                out["accept"] += prob
            return
        P, Z = m.P_at(t), m.Z_at(t + 1)
        for s2 in range(m.n_states):
            ps = P[u, s, s2]
            if ps == 0:
                continue
            for o in range(m.n_obs):
                po = Z[s2, o]
                if po == 0:
                    continue
                go(t + 1, s2, policy.advance(node, u, o), prob * ps * po, word, ro_sum, rc_sum)

    Z0 = m.Z_at(0)
    for s in range(m.n_states):
        for o in range(m.n_obs):
            p = m.init[s] * Z0[s, o]
            if p > 0:
                go(0, s, policy.start(o), p, [], 0.0, 0.0)
    return out


def occupancy_lp(m: LabeledPomdp, dfa, delta: float, rho: float):
    """Best expected objective over all (randomized) policies of a fully observed model.

    Time-indexed occupancy measures over (state, automaton state, action);
    the automaton is stepped on the label of the state being left.  Returns
    ``None`` when the constraints cannot be met.
    """
    T = m.horizon.T
    S, U, nq = m.n_states, m.n_actions, dfa.n_states
    X = S * nq
    nxt_q = np.array([[dfa.step(q, int(m.labels[s])) for q in range(nq)] for s in range(S)])  # (S, nq)
    acc = np.array([q in dfa.accepting for q in range(nq)], dtype=float)

    def var(t, s, q, u):
        return ((t * S + s) * nq + q) * U + u

    n = (T + 1) * X * U
    c = np.zeros(n)
    g_con = np.zeros(n)
    g_acc = np.zeros(n)
    A_eq, b_eq = [], []
    for t in range(T + 1):
        P = m.P_at(t)
        for s in range(S):
            for q in range(nq):
                for u in range(U):
                    i = var(t, s, q, u)
                    c[i] = m.ro_at(t)[s, u]
                    g_con[i] = m.rc_at(t)[s, u]
                    if t == T:
                        g_acc[i] = acc[nxt_q[s, q]]
    # flow conservation
    for s in range(S):
        for q in range(nq):
            row = np.zeros(n)
            for u in range(U):
                row[var(0, s, q, u)] = 1.0
            A_eq.append(row)
            b_eq.append(m.init[s] if q == dfa.initial else 0.0)
    for t in range(T):
        P = m.P_at(t)
        for s2 in range(S):
            for q2 in range(nq):
                row = np.zeros(n)
                for u in range(U):
                    row[var(t + 1, s2, q2, u)] = 1.0
                for s in range(S):
                    for q in range(nq):
                        if nxt_q[s, q] != q2:
                            continue
                        for u in range(U):
                            row[var(t, s, q, u)] -= P[u, s, s2]
                A_eq.append(row)
                b_eq.append(0.0)
    res = linprog(-c, A_ub=-np.vstack([g_con, g_acc]), b_ub=-np.array([rho, 1.0 - delta]),
                  A_eq=np.array(A_eq), b_eq=np.array(b_eq), bounds=[(0, None)] * n, method="highs")
    if res.status != 0:
        return None
    return -res.fun


def binding_thresholds(p, frac=0.5):
    """Thresholds between the unconstrained optimum and the best achievable channel values.

    Returns ``(delta, rho)`` such that both constraints bind for the
    unconstrained optimum whenever the channels can be improved at all.
    """
    from ltlfpomdp.cpomdp import eval_exact
    from ltlfpomdp.solve import lagrangian_problem, solve_exact

    def channels(lam):
        return eval_exact(p, solve_exact(lagrangian_problem(p, lam)).policy)

    base, acc, con = channels((0.0, 0.0)), channels((1e3, 0.0)), channels((0.0, 1e3))
    f_min = base["accept"].value + frac * (acc["accept"].value - base["accept"].value)
    c_min = base["constraint"].value + frac * (con["constraint"].value - base["constraint"].value)
    return float(np.clip(1.0 - f_min, 0.0, 1.0)), c_min


def constrained_mdp(rng, spec="F a", S=3, T=2):
    """Fully observed tiny instance with binding thresholds and its LP optimum."""
    from ltlfpomdp.ltlf import AtomTable, compile_spec
    from ltlfpomdp.product import build_product

    frac = 0.5
    while True:
        m = random_pomdp(rng, S=S, T=T, full_obs=True)
        d = compile_spec(spec, AtomTable(list(m.atoms)))
        p = build_product(m, d)
        delta, rho = binding_thresholds(p, frac)
        r_star = occupancy_lp(m, d, delta, rho)
        if r_star is not None:
            return p, delta, rho, r_star


def random_ma(rng, S=2, local_sizes=(2, 1), agent_actions=(2, 2), T=2, shared_atoms=("g",),
              local_atoms=(("a",), ("b",)), sparsity=0.5):
    from ltlfpomdp.multiagent import MaModel

    U = int(np.prod(agent_actions))
    P = random_stochastic(rng, (U, S, S), sparsity)
    local_P = [random_stochastic(rng, (U, S, n, n), sparsity) for n in local_sizes]
    init = random_stochastic(rng, (S * int(np.prod(local_sizes)),), 0.3).reshape((S,) + tuple(local_sizes))
    shared_labels = rng.integers(1 << len(shared_atoms), size=S)
    local_labels = [rng.integers(1 << len(a), size=(S, n)) for a, n in zip(local_atoms, local_sizes)]
    ro = np.round(rng.random((S,) + tuple(local_sizes) + (U,)), 3)
    return MaModel(P, local_P, agent_actions, init, shared_labels, local_labels, ro, Fixed(T),
                   shared_atoms=shared_atoms, local_atoms=local_atoms)


def team_optimum(m, phi, local_dfas, lam: float) -> float:
    """Best ``E[sum_t r + lam 1{word |= phi}]`` over team policies of the reduced form.

    Agent ``i`` acts on ``(s^i_t, q^i_t, S_{0:t}, U_{0:t-1})``, so a team
    policy picks, at every common history, one table per agent from
    ``(s^i, q^i)`` to actions.  All such tables are tried at every common
    history; the choices at distinct histories separate, so the recursion
    returns the maximum over all team policies.  Hidden information is carried
    as explicit local-state histories and acceptance is evaluated on the
    joint word.
    """
    T = m.horizon.T
    N = m.N
    letters = m.joint_labels()
    tables = []
    for i in range(N):
        keys = [(si, q) for si in range(m.local_sizes[i]) for q in range(local_dfas[i].n_states)]
        tables.append([dict(zip(keys, acts))
                       for acts in itertools.product(range(m.agent_actions[i]), repeat=len(keys))])
    joint_tables = list(itertools.product(*tables))
    local_moves = list(itertools.product(*[range(n) for n in m.local_sizes]))
    accept_cache: dict = {}
    memo: dict = {}

    def local_q(i, shared, hist):
        word = [int(m.local_labels[i][shared[k], hist[k][i]]) for k in range(len(shared) - 1)]
        return local_dfas[i].run(word)

    def accepted(shared, hist):
        key = (shared, hist)
        if key not in accept_cache:
            word = [int(letters[(shared[k],) + hist[k]]) for k in range(T + 1)]
            accept_cache[key] = eval_trace(phi, word)
        return accept_cache[key]

    def node(shared, particles):
        t = len(shared) - 1
        key = (shared, particles)
        if key in memo:
            return memo[key]
        s = shared[-1]
        qs = {hist: [local_q(i, shared, hist) for i in range(N)] for hist, _ in particles}
        best = -np.inf
        for tabs in joint_tables:
            value = 0.0
            children: dict = {}
            for hist, p in particles:
                loc = hist[-1]
                u = m.joint_action([tabs[i][(loc[i], qs[hist][i])] for i in range(N)])
                value += p * m.ro[(s,) + loc + (u,)]
                if t == T:
                    value += p * lam * accepted(shared, hist)
                    continue
                for s2 in np.flatnonzero(m.P[u, s]).tolist():
                    for loc2 in local_moves:
                        w = p * m.P[u, s, s2]
                        for i in range(N):
                            w *= m.local_P[i][u, s, loc[i], loc2[i]]
                        if w > 0:
                            d = children.setdefault((u, s2), {})
                            d[hist + (loc2,)] = d.get(hist + (loc2,), 0.0) + w
            for (u, s2), d in children.items():
                value += node(shared + (s2,), tuple(sorted(d.items())))
            best = max(best, value)
        memo[key] = best
        return best

    total = 0.0
    for s in range(m.n_shared):
        parts = tuple(((tuple(loc),), float(m.init[(s,) + loc])) for loc in local_moves if m.init[(s,) + loc] > 0)
        if parts:
            total += node((s,), parts)
    return total
