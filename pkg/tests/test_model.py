import math

import numpy as np
import pytest

from ltlfpomdp.errors import ModelError, NegativeConstraintReward, NonTermination, NotStochastic, SchemaError
from ltlfpomdp.model import (
    Fixed, Geometric, GoalSet, HistoryPolicy, LabeledPomdp, OpenLoopPolicy, label_word,
    load_model, model_from_dict, model_to_dict, save_model, simulate, validate,
)
from ltlfpomdp.rollout import hoeffding


def one_state(horizon, rc=1.0):
    return LabeledPomdp(np.ones((1, 1, 1)), np.ones((1, 1)), [1.0], [0], np.zeros((1, 1)),
                        np.full((1, 1), rc), horizon)


def chain(horizon=Fixed(1)):
    # s0 -> s1 -> s1, L(s1) = {a}
    P = np.array([[[0.0, 1.0], [0.0, 1.0]]])
    return LabeledPomdp(P, np.eye(2), [1.0, 0.0], [0, 1], np.zeros((2, 1)), np.zeros((2, 1)),
                        horizon, ("a",))


def three_state():
    P = np.array([[[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.0, 0.4, 0.6]],
                  [[0.9, 0.0, 0.1], [0.3, 0.3, 0.4], [0.5, 0.5, 0.0]]])
    Z = np.array([[0.7, 0.3], [0.2, 0.8], [0.5, 0.5]])
    return LabeledPomdp(P, Z, [0.5, 0.25, 0.25], [0, 1, 2], np.zeros((3, 2)), np.zeros((3, 2)),
                        Fixed(5), ("a", "b"))


def test_validate_geometric_series():
    b = validate(one_state(Geometric(0.5)))
    assert b.T_max == pytest.approx(1.0)
    assert b.R_max == pytest.approx(2.0)
    assert b.G == pytest.approx(2.0)


def test_validate_fixed_counts_t_plus_one_steps():
    b = validate(one_state(Fixed(3)))
    assert b.T_max == 3 and b.R_max == pytest.approx(4.0)
    assert validate(one_state(Fixed(3), rc=0.0)).G == 1.0


def test_validate_rejects_substochastic_row():
    m = three_state()
    m.P[1, 2] = [0.5, 0.4, 0.0]
    with pytest.raises(NotStochastic) as e:
        validate(m)
    assert "transition" in str(e.value)


def test_validate_rejects_negative_constraint_reward_for_geometric():
    with pytest.raises(NegativeConstraintReward):
        validate(one_state(Geometric(0.5), rc=-1.0))
    validate(one_state(Fixed(2), rc=-1.0))


def test_shape_mismatch():
    with pytest.raises(ModelError):
        LabeledPomdp(np.ones((1, 2, 2)) / 2, np.ones((2, 1)), [1.0, 0.0], [0, 0], np.zeros((3, 1)),
                     np.zeros((2, 1)), Fixed(1))


def test_time_varying_needs_fixed_horizon():
    P = np.ones((3, 1, 1, 1))
    with pytest.raises(ModelError):
        LabeledPomdp(P, np.ones((3, 1, 1)), [1.0], [0], np.zeros((3, 1, 1)), np.zeros((3, 1, 1)),
                     Geometric(0.5))
    m = LabeledPomdp(P, np.ones((3, 1, 1)), [1.0], [0], np.zeros((3, 1, 1)), np.zeros((3, 1, 1)), Fixed(2))
    assert not m.time_invariant


def test_horizon_invariants():
    with pytest.raises(ValueError):
        Geometric(1.0)
    with pytest.raises(ValueError):
        Geometric(0.0)
    with pytest.raises(ValueError):
        Fixed(-1)


def test_simulate_deterministic_chain():
    tr = simulate(chain(), OpenLoopPolicy([0]), 0)
    assert tr.states == [0, 1, 1]
    assert tr.actions == [0, 0]
    assert tr.observations == [0, 1]
    assert tr.T == 1
    assert label_word(tr) == [0, 1]


def test_label_word_length_is_horizon_plus_one():
    m = three_state().with_horizon(Geometric(0.8))
    rng = np.random.default_rng(3)
    for _ in range(200):
        tr = simulate(m, OpenLoopPolicy([1, 0]), rng)
        assert len(label_word(tr)) == tr.T + 1 == len(tr.observations)
        assert len(tr.states) == tr.T + 2


def test_geometric_mean_horizon():
    m = one_state(Geometric(0.99))
    pol = OpenLoopPolicy([0])
    n = 100_000
    Ts = np.array([simulate(m, pol, seed).T for seed in range(n, 2 * n)])
    mean = 0.99 / 0.01
    se = math.sqrt(0.99) / 0.01 / math.sqrt(n)
    assert abs(Ts.mean() - mean) <= 3 * se


def test_geometric_horizon_is_memoryless():
    m = one_state(Geometric(0.7))
    rng = np.random.default_rng(11)
    Ts = np.array([simulate(m, OpenLoopPolicy([0]), rng).T for _ in range(20_000)])
    for t in range(4):
        at_least = (Ts >= t).sum()
        ratio = (Ts >= t + 1).sum() / at_least
        assert abs(ratio - 0.7) <= hoeffding(1.0, at_least)


def test_goal_unreachable_raises():
    P = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    m = LabeledPomdp(P, np.ones((2, 1)), [1.0, 0.0], [0, 0], -np.ones((2, 1)), np.zeros((2, 1)),
                     GoalSet((1,), step_cap=100))
    with pytest.raises(NonTermination):
        simulate(m, OpenLoopPolicy([0]), 0)


def test_goal_run_stops_after_acting_in_goal():
    P = np.array([[[0.0, 1.0], [0.0, 1.0]]])
    m = LabeledPomdp(P, np.ones((2, 1)), [1.0, 0.0], [0, 0], -np.ones((2, 1)), np.zeros((2, 1)),
                     GoalSet((1,)))
    tr = simulate(m, OpenLoopPolicy([0]), 0)
    assert tr.states == [0, 1, 1] and tr.T == 1


def test_seeded_determinism():
    m = three_state()
    pol = HistoryPolicy(lambda obs, acts: obs[-1])
    a, b = simulate(m, pol, 42), simulate(m, pol, 42)
    assert a == b


def test_transition_frequencies_within_hoeffding():
    m = three_state().with_horizon(Fixed(0))
    pol = OpenLoopPolicy([1])
    n = 100_000
    counts = np.zeros((3, 3))
    rng = np.random.default_rng(5)
    for _ in range(n):
        tr = simulate(m, pol, rng)
        counts[tr.states[0], tr.states[1]] += 1
    for s in range(3):
        ns = counts[s].sum()
        freq = counts[s] / ns
        # union bound over the nine cells
        assert np.all(np.abs(freq - m.P[1, s]) <= hoeffding(1.0, ns, 1 - 0.01 / 9))


def test_json_round_trip(tmp_path):
    m = three_state()
    m2 = model_from_dict(model_to_dict(m))
    for k in ("P", "Z", "init", "labels", "ro", "rc"):
        np.testing.assert_array_equal(getattr(m, k), getattr(m2, k))
    assert m2.horizon == m.horizon and m2.atoms == m.atoms
    save_model(m, tmp_path / "m.json")
    assert load_model(tmp_path / "m.json").horizon == Fixed(5)


def test_json_named_sparse_entries():
    data = {
        "version": 1, "states": ["x", "y"], "actions": ["go"], "observations": 1, "atoms": ["a"],
        "labels": {"y": ["a"]},
        "transitions": [["x", "go", "y", 1.0], ["y", "go", "y", 1.0]],
        "observation_fn": [["x", 0, 1.0], ["y", 0, 1.0]],
        "init": [["x", 1.0]],
        "reward_objective": [["x", "go", 2.0]],
        "horizon": {"type": "goal", "goals": ["y"]},
    }
    m = model_from_dict(data)
    assert m.labels.tolist() == [0, 1]
    assert m.P[0, 0, 1] == 1.0 and m.ro[0, 0] == 2.0
    assert m.horizon.goals == (1,)
    data["horizon"] = {"type": "bogus"}
    with pytest.raises(SchemaError):
        model_from_dict(data)
    del data["transitions"]
    with pytest.raises(SchemaError):
        model_from_dict(data)
