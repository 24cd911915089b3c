import itertools

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from oracles import team_optimum, random_ma
from ltlfpomdp.cpomdp import EgConfig, MixedPolicy, eval_exact, run_eg
from ltlfpomdp.errors import AtomMismatch, BlowUp, ModelError
from ltlfpomdp.ltlf import AtomTable, compile_spec, eval_words
from ltlfpomdp.model import Fixed, Geometric, HistoryPolicy, simulate
from ltlfpomdp.multiagent import (
    MaModel, SpecBundle, build_coordinator, build_ma_product, centralized, ma_from_dict, ma_to_dict,
    run_accepts, run_word, simulate_team, team_from_coordinator, unpack_policy,
)
from ltlfpomdp.product import build_product, eval_channels
from ltlfpomdp.solve import fixed_lagrangian, solve_exact


def tiny(seed, local_sizes=(2, 1), specs=("F g", "true", "F b"), **kw):
    m = random_ma(np.random.default_rng(seed), local_sizes=local_sizes, **kw)
    b = SpecBundle.compile(m, specs[0], list(specs[1:]))
    return m, b, build_ma_product(m, b)


def single_agent(seed, T=2, horizon=None):
    # one agent without local state: the team is a fully observed MDP
    m = random_ma(np.random.default_rng(seed), S=3, local_sizes=(1,), agent_actions=(3,), T=T,
                  local_atoms=((),))
    if horizon is not None:
        m.horizon = horizon
    return m


# -- model and product ---------------------------------------------------------


def test_joint_kernel_factorizes():
    m = random_ma(np.random.default_rng(0), S=3, local_sizes=(2, 3), agent_actions=(2, 3))
    K = m.joint_kernel()
    for u, s, s2 in itertools.product(range(m.n_actions), range(3), range(3)):
        for (l, (a, b)), (l2, (a2, b2)) in itertools.product(
                enumerate(itertools.product(range(2), range(3))), repeat=2):
            want = m.P[u, s, s2] * m.local_P[0][u, s, a, a2] * m.local_P[1][u, s, b, b2]
            assert abs(K[u, s, l, s2, l2] - want) <= 1e-12
    np.testing.assert_allclose(K.sum(axis=(3, 4)), 1.0, atol=1e-12)


def test_joint_actions_and_labels():
    m = random_ma(np.random.default_rng(1), S=2, local_sizes=(2, 2), agent_actions=(2, 3))
    assert m.n_actions == 6 and m.split_action(m.joint_action([1, 2])) == (1, 2)
    assert m.joint_action([1, 0]) == 3  # agent 1 is most significant
    L = m.joint_labels()
    for s, a, b in itertools.product(range(2), range(2), range(2)):
        want = m.shared_labels[s] | m.local_labels[0][s, a] << 1 | m.local_labels[1][s, b] << 2
        assert L[s, a, b] == want


def test_model_validation():
    m = random_ma(np.random.default_rng(2))
    with pytest.raises(ModelError):
        MaModel(m.P, m.local_P, (2, 2), m.init, m.shared_labels, m.local_labels, m.ro, m.horizon,
                shared_atoms=("a",), local_atoms=(("a",), ("b",)))
    with pytest.raises(ModelError):
        MaModel(m.P, m.local_P, (2, 3), m.init, m.shared_labels, m.local_labels, m.ro, m.horizon,
                shared_atoms=m.shared_atoms, local_atoms=m.local_atoms)


def test_single_agent_reduces_to_product():
    m = single_agent(3)
    b = SpecBundle.compile(m, "F g")
    flat = build_ma_product(m, b).flat()
    ref = build_product(centralized(m), b.shared)
    for k in ("P", "Z", "init", "ro", "rc", "rf", "labels"):
        np.testing.assert_array_equal(getattr(flat, k), getattr(ref, k))


def test_true_specs_accept_everything():
    m, b, fp = tiny(4, specs=("true", "true", "true"))
    np.testing.assert_array_equal(fp.flat().rf, 1.0)
    np.testing.assert_array_equal(build_coordinator(fp).rf, 1.0)


def test_local_atoms_checked():
    m = random_ma(np.random.default_rng(5))
    b = SpecBundle(compile_spec("F g", AtomTable(["g"])), (compile_spec("F z", AtomTable(["z"])),
                                                           compile_spec("true", AtomTable(["b"]))))
    with pytest.raises(AtomMismatch):
        build_ma_product(m, b)


def test_flat_product_accepts_conjunction():
    # product acceptance of the flat model equals the acceptance of the conjunction
    m, b, fp = tiny(6, specs=("F g", "G !a", "F b"))
    flat = fp.flat()
    conj = compile_spec(b.conjunction(), AtomTable(m.joint_atoms))
    ref = build_product(centralized(m), conj)
    pol = HistoryPolicy(lambda obs, acts: (sum(obs) + len(acts)) % m.n_actions)
    a, c = eval_channels(flat, pol), eval_channels(ref, pol)
    for k in a:
        assert a[k].value == pytest.approx(c[k].value, abs=1e-12)


# -- coordinator ---------------------------------------------------------------


def test_identity_reduction():
    m = single_agent(7)
    b = SpecBundle.compile(m, "F g")
    c = build_coordinator(build_ma_product(m, b))
    assert c.n_actions == m.n_actions
    np.testing.assert_array_equal(c.joint_u[:, 0], np.arange(m.n_actions))
    got = solve_exact(fixed_lagrangian(c, (2.0, 0.0))).value
    want = solve_exact(fixed_lagrangian(build_product(centralized(m), b.shared), (2.0, 0.0))).value
    assert got == pytest.approx(want, abs=1e-12)


def test_prescription_count():
    m = random_ma(np.random.default_rng(8), local_sizes=(2, 2), agent_actions=(2, 2))
    c = build_coordinator(build_ma_product(m, SpecBundle.compile(m)))
    assert c.n_actions == 16 and c.n_prescriptions == (4, 4)
    for a in range(16):
        t1, t2 = c.prescription(a)
        for j in range(4):
            p1, p2 = divmod(j, 2)
            assert c.joint_u[a, j] == m.joint_action([t1[p1], t2[p2]])


def test_caps_raise_with_cardinality():
    m, b, fp = tiny(9, local_sizes=(2, 2), specs=("true", "G !a", "G !b"))
    with pytest.raises(BlowUp) as e:
        build_coordinator(fp, private_cap=8)
    assert e.value.size == 16
    with pytest.raises(BlowUp) as e:
        build_coordinator(fp, prescription_cap=100)
    assert e.value.size == 256
    with pytest.raises(BlowUp):
        build_coordinator(fp, cell_cap=1000)


def test_observation_reveals_shared_state_and_joint_action():
    m, b, fp = tiny(10, specs=("F g", "G !a", "F b"))
    c = build_coordinator(fp)
    U = m.n_actions
    assert c.n_obs == m.n_shared * (U + 1)
    for x, (s, qg, j, up) in enumerate(c.states):
        assert c.Z[x, c.obs_index(s, None if up == U else up)] == 1.0
        for a in range(c.n_actions):
            for x2 in np.flatnonzero(c.P[a, x]):
                s2, qg2, _, up2 = c.states[x2]
                assert up2 == c.joint_u[a, j]
                assert qg2 == fp.shared_step[qg, s]
                assert m.P[up2, s, s2] > 0


@pytest.mark.parametrize("seed", range(6))
def test_coordinator_optimum_equals_brute_force(seed):
    specs = ("F g", "true", "F b") if seed % 2 else ("G !g", "G !a", "F b")
    m, b, fp = tiny(seed, specs=specs)
    c = build_coordinator(fp)
    for lam in (0.0, 1.5):
        got = solve_exact(fixed_lagrangian(c, (lam, 0.0))).value
        want = team_optimum(m, b.formula(m), b.local, lam)
        assert abs(got - want) <= 1e-9


def test_coordinator_runs_through_eg():
    m, b, fp = tiny(11, specs=("F g", "true", "F b"))
    c = build_coordinator(fp)
    res = run_eg(c, EgConfig(K=8, B=2.0, delta=0.4))
    ev = eval_exact(c, res.policy)
    assert 0.0 <= ev["accept"].value <= 1.0
    assert res.certificate.reward_gap >= 0


# -- agent-side execution ------------------------------------------------------


def deterministic_team():
    m = random_ma(np.random.default_rng(12), S=3, local_sizes=(2, 2), agent_actions=(2, 2), T=4)
    U = m.n_actions
    rng = np.random.default_rng(0)
    # every row collapses onto one successor
    for k in [m.P] + list(m.local_P):
        idx = rng.integers(k.shape[-1], size=k.shape[:-1])
        k[...] = 0.0
        np.put_along_axis(k, idx[..., None], 1.0, axis=-1)
    m.init[...] = 0.0
    m.init[0, 1, 0] = 1.0
    assert U == 4
    return m


def test_agents_reproduce_deterministic_trajectory():
    m = deterministic_team()
    b = SpecBundle.compile(m, "F g", ["true", "true"])
    fp = build_ma_product(m, b)
    c = build_coordinator(fp)
    pol = solve_exact(fixed_lagrangian(c, (1.0, 0.0))).policy
    agents = [unpack_policy(c, pol, i) for i in range(2)]
    for seed in range(5):
        want = team_from_coordinator(c, simulate(c, pol, seed))
        assert simulate_team(fp, agents, seed) == want


def test_single_agent_execution_follows_policy():
    m = single_agent(13, T=3)
    b = SpecBundle.compile(m, "F g")
    fp = build_ma_product(m, b)
    c = build_coordinator(fp)
    pol = solve_exact(fixed_lagrangian(c, (1.0, 0.0))).policy
    agent = unpack_policy(c, pol, 0)
    for seed in range(50):
        run = simulate_team(fp, [agent], seed)
        node = pol.start(c.obs_index(run.shared[0], None))
        for t, u in enumerate(run.actions):
            assert u == pol.action(node)
            node = pol.advance(node, u, c.obs_index(run.shared[t + 1], u))


def _homogeneous(a: list, b: list) -> float:
    keys = sorted(set(a) | set(b))
    ca = np.array([a.count(k) for k in keys])
    cb = np.array([b.count(k) for k in keys])
    # pool categories with small expected counts
    small = (ca + cb) < 10
    table = np.vstack([np.append(ca[~small], ca[small].sum()), np.append(cb[~small], cb[small].sum())])
    table = table[:, table.sum(axis=0) > 0]
    return chi2_contingency(table)[1]


def test_agents_match_coordinator_distribution():
    m, b, fp = tiny(14, specs=("F g", "G !a", "F b"), sparsity=0.3)
    c = build_coordinator(fp)
    best = solve_exact(fixed_lagrangian(c, (1.0, 0.0))).policy
    other = HistoryPolicy(lambda obs, acts: (5 * sum(obs) + 7 * len(obs)) % c.n_actions)
    mixed = MixedPolicy([best, other], [0.4, 0.6])
    agents = [unpack_policy(c, mixed, i) for i in range(2)]
    n = 10_000
    rng = np.random.default_rng(1)
    team = [simulate_team(fp, agents, rng).key() for _ in range(n)]

    def coordinator_runs(weights):
        rng = np.random.default_rng(2)
        mp = MixedPolicy([best, other], weights)
        return [team_from_coordinator(c, simulate(c, mp.sample(rng), rng)).key() for _ in range(n)]

    assert _homogeneous(team, coordinator_runs([0.4, 0.6])) > 0.01
    # power check: a small change of the mixing weights is detected
    assert _homogeneous(team, coordinator_runs([0.45, 0.55])) < 0.01


# -- conjunction acceptance ----------------------------------------------------


def lane_model(n=4, T=5):
    """Two agents on a line; ``col`` when they are at distance <= 1.

    Each agent privately holds one of two goal cells; a goal reached moves
    with probability 0.2.  Moves slip to "stay" with probability 0.1.
    """
    cells = range(n)
    S = n * n
    moves = (0, -1, 1)
    U = 9
    P = np.zeros((U, S, S))
    for u, (p1, p2) in itertools.product(range(U), itertools.product(cells, cells)):
        d1, d2 = moves[u // 3], moves[u % 3]
        for ok1, ok2 in itertools.product((True, False), repeat=2):
            w = (0.9 if ok1 else 0.1) * (0.9 if ok2 else 0.1)
            q1 = min(max(p1 + d1 * ok1, 0), n - 1)
            q2 = min(max(p2 + d2 * ok2, 0), n - 1)
            P[u, p1 * n + p2, q1 * n + q2] += w
    goals = ((0, n - 1), (n - 1, 0))
    local_P, local_labels = [], []
    for i in range(2):
        k = np.zeros((U, S, 2, 2))
        lab = np.zeros((S, 2), dtype=np.int64)
        for s in range(S):
            pos = divmod(s, n)[i]
            for g in range(2):
                at = pos == goals[i][g]
                lab[s, g] = int(at)
                k[:, s, g, g] = 0.8 if at else 1.0
                k[:, s, g, 1 - g] = 0.2 if at else 0.0
        local_P.append(k)
        local_labels.append(lab)
    shared_labels = np.array([int(abs(p1 - p2) <= 1) for p1, p2 in itertools.product(cells, cells)])
    init = np.zeros((S, 2, 2))
    init[0 * n + (n - 1), :, :] = 0.25
    ro = np.zeros((S, 2, 2, U))
    for s in range(S):
        for g1, g2 in itertools.product(range(2), repeat=2):
            ro[s, g1, g2] = local_labels[0][s, g1] + 3 * local_labels[1][s, g2]
    return MaModel(P, local_P, (3, 3), init, shared_labels, local_labels, ro, Fixed(T),
                   shared_atoms=("col",), local_atoms=(("at1",), ("at2",)))


class RandomAgent:
    def __init__(self, n_actions, rng):
        self.n, self.rng = n_actions, rng

    def reset(self, s, si, seed=None):
        pass

    def act(self):
        return int(self.rng.integers(self.n))

    def observe(self, u, s_next, si_next):
        pass


def test_conjunction_acceptance_matches_trace_semantics():
    m = lane_model()
    b = SpecBundle.compile(m, "G !col", ["F at1", "true"])
    fp = build_ma_product(m, b)
    phi = b.formula(m)
    rng = np.random.default_rng(3)
    agents = [RandomAgent(3, rng), RandomAgent(3, rng)]
    runs = [simulate_team(fp, agents, rng) for _ in range(10_000)]
    words = np.array([run_word(m, r) for r in runs])
    want = eval_words(phi, words)
    got = np.array([run_accepts(fp, r) for r in runs])
    np.testing.assert_array_equal(got, want)
    assert 0 < want.sum() < len(runs)


def test_coordinator_terminal_reward_matches_trace_semantics():
    m, b, fp = tiny(15, specs=("F g", "G !a", "F b"), T=3)
    c = build_coordinator(fp)
    phi = b.formula(m)
    pol = HistoryPolicy(lambda obs, acts: (3 * sum(obs) + len(obs)) % c.n_actions)
    rng = np.random.default_rng(4)
    for _ in range(2000):
        tr = simulate(c, pol, rng)
        run = team_from_coordinator(c, tr)
        assert c.rf[tr.states[-1]] == float(eval_words(phi, np.array([run_word(m, run)]))[0])


# -- JSON ----------------------------------------------------------------------


def test_json_round_trip():
    m, b, fp = tiny(16, specs=("F g", "G !a", "F b"))
    m.horizon = Geometric(0.9)
    m2, b2 = ma_from_dict(ma_to_dict(m, b))
    for k in ("P", "init", "shared_labels", "ro", "rc"):
        np.testing.assert_array_equal(getattr(m, k), getattr(m2, k))
    for x, y in zip(m.local_P + m.local_labels, m2.local_P + m2.local_labels):
        np.testing.assert_array_equal(x, y)
    assert m2.horizon == m.horizon and b2.texts == b.texts
    assert b2.shared.n_states == b.shared.n_states


def test_json_named_entries():
    data = {
        "shared_states": ["x", "y"], "shared_atoms": ["g"], "shared_label": {"y": ["g"]},
        "agents": [
            {"actions": ["stay", "go"], "local_states": 1, "atoms": [],
             "local_transitions": [[0, s, u, 0, 1.0] for s in ("x", "y") for u in (["stay"], ["go"])]},
        ],
        "transitions": [["x", ["go"], "y", 1.0], ["x", ["stay"], "x", 1.0],
                        ["y", ["go"], "y", 1.0], ["y", ["stay"], "y", 1.0]],
        "init": [["x", 0, 1.0]],
        "reward_objective": [["y", 0, ["stay"], 1.0]],
        "horizon": {"type": "fixed", "T": 2},
        "specs": {"global": "F g", "local": ["true"]},
    }
    m, b = ma_from_dict(data)
    assert m.P[1, 0, 1] == 1.0 and m.ro[1, 0, 0] == 1.0
    c = build_coordinator(build_ma_product(m, b))
    # go, then stay twice: reward 2 and the goal is seen
    assert solve_exact(fixed_lagrangian(c, (1.0, 0.0))).value == pytest.approx(3.0)
