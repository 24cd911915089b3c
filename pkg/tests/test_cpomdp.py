import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import constrained_mdp, random_pomdp
from ltlfpomdp.cpomdp import (
    EgConfig, LagrangePoint, MixedPolicy, TraceRow, best_small_mixture, default_eta, eg_step,
    eg_step_formula, eval_exact, eval_mc, exact_evaluator, exact_hook, feasibility_report,
    lagrangian, mc_evaluator, mixing_lp, reduce_support, regret_bound, run_eg,
)
from ltlfpomdp.errors import InfeasibleLP, IterationBudget
from ltlfpomdp.ltlf import AtomTable, compile_spec
from ltlfpomdp.model import Fixed, LabeledPomdp, OpenLoopPolicy
from ltlfpomdp.product import build_product
from ltlfpomdp.solve import objective_problem, solve_exact

LOG3 = math.log(3)
unit = st.floats(0.0, 1.0)


def product_of(m, spec="F a"):
    return build_product(m, compile_spec(spec, AtomTable(list(m.atoms))))


# -- Lagrangian and dual step --------------------------------------------------


def test_lagrangian_zero_multipliers():
    vals = {"objective": 2.5, "constraint": 0.1, "accept": 0.3}
    assert lagrangian(vals, (0.0, 0.0), 0.2, 0.7) == 2.5


@given(unit, unit, unit, unit, st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0, 5))
def test_lagrangian_penalties_and_affinity(ro, acc, delta, rho, f1, c1, f2, c2):
    vals = {"objective": ro, "constraint": rho + 0.5, "accept": max(acc, 1 - delta)}
    # feasible: both slacks nonnegative
    assert lagrangian(vals, (f1, c1), delta, rho) >= ro - 1e-12
    mid = lagrangian(vals, ((f1 + f2) / 2, (c1 + c2) / 2), delta, rho)
    avg = (lagrangian(vals, (f1, c1), delta, rho) + lagrangian(vals, (f2, c2), delta, rho)) / 2
    assert mid == pytest.approx(avg, abs=1e-12)


def test_lagrange_point_invariants():
    with pytest.raises(ValueError):
        LagrangePoint(2.0, 2.0, 3.0)
    with pytest.raises(ValueError):
        LagrangePoint(-0.1, 0.0, 3.0)
    lam = LagrangePoint.start(3.0)
    assert (lam.f, lam.c, lam.slack) == (1.0, 1.0, 1.0)


def test_eg_step_zero_subgradient_is_fixed_point():
    lam = LagrangePoint(0.7, 1.1, 2.0)
    assert eg_step(lam, 0.8, 0.4, 0.9, 0.2, 0.4) == lam
    assert eg_step_formula(lam, 0.8, 0.4, 0.9, 0.2, 0.4) == lam


def test_eg_step_worked_example():
    # B=3, lambda=(1,1), eta=1, accept slack +1, constraint slack 0
    e = math.exp(-1.0)
    want_f = 3 * e / (3 + (e - 1))
    want_c = 3 * 1 / (3 + (e - 1))
    for step in (eg_step, eg_step_formula):
        out = step(LagrangePoint(1.0, 1.0, 3.0), 1.0, 0.0, 1.0, 1.0, 0.0)
        assert out.f == pytest.approx(want_f, rel=1e-15)
        assert out.c == pytest.approx(want_c, rel=1e-15)
    assert want_f == pytest.approx(3 * e / (2 + e), rel=1e-15)


def test_violated_spec_raises_multiplier():
    lam = LagrangePoint(1.0, 0.5, 3.0)
    out = eg_step(lam, 0.4, 0.5, 0.3, 0.2, 0.5)  # accept 0.4 < 1 - delta = 0.8
    assert out.f > lam.f


@settings(max_examples=300)
@given(st.floats(0.01, 100), unit, unit, st.floats(-50, 50), st.floats(-50, 50), st.floats(0, 50))
def test_eg_step_matches_formula(B, a, b, gf, gc, eta):
    f, c = B * a * b, B * a * (1 - b)
    lam = LagrangePoint(f, c, B)
    x = eg_step(lam, gf + 0.5, gc, eta, 0.5, 0.0)
    # the verbatim denominator cancels badly for large exponents
    if abs(eta * gf) <= 3 and abs(eta * gc) <= 3:
        y = eg_step_formula(lam, gf + 0.5, gc, eta, 0.5, 0.0)
        assert x.f == pytest.approx(y.f, rel=1e-9, abs=1e-12 * B)
        assert x.c == pytest.approx(y.c, rel=1e-9, abs=1e-12 * B)
    assert x.f >= 0 and x.c >= 0 and x.f + x.c <= B


def test_eta_and_bound():
    assert default_eta(16, 2.0, 3.0) == pytest.approx(math.sqrt(LOG3 / (2 * 16 * 4 * 9)))
    assert regret_bound(64, 2.0, 3.0) == pytest.approx(regret_bound(16, 2.0, 3.0) / 2)


# -- evaluation ----------------------------------------------------------------


def chain(T=2):
    P = np.array([[[0.0, 1.0], [0.0, 1.0]]])
    return LabeledPomdp(P, np.eye(2), [1.0, 0.0], [0, 1], np.array([[1.0], [2.0]]),
                        np.array([[0.5], [0.0]]), Fixed(T), ("a",))


def test_eval_mc_true_spec_accepts_always():
    p = product_of(chain(), "true")
    est = eval_mc(p, OpenLoopPolicy([0]), n=100, seed=0, channel="accept")
    assert est.value == 1.0


def test_eval_mc_deterministic_chain_is_exact():
    p = product_of(chain())
    mc = eval_mc(p, OpenLoopPolicy([0]), n=50, seed=1)
    ex = eval_exact(p, OpenLoopPolicy([0]))
    for k in ("objective", "constraint", "accept"):
        assert mc[k].value == pytest.approx(ex[k].value, abs=1e-12)


def test_eval_mc_radius_sqrt_law():
    p = product_of(chain())
    r1 = eval_mc(p, OpenLoopPolicy([0]), n=500, seed=0)
    r4 = eval_mc(p, OpenLoopPolicy([0]), n=2000, seed=0)
    for k in r1:
        assert r4[k].radius == pytest.approx(r1[k].radius / 2)


def test_mixed_policy_linearity():
    rng = np.random.default_rng(0)
    m = random_pomdp(rng, S=3, T=2)
    p = product_of(m)
    pols = [OpenLoopPolicy([0]), OpenLoopPolicy([1]), OpenLoopPolicy([0, 1])]
    mix = MixedPolicy(pols, [0.2, 0.3, 0.5])
    got = eval_exact(p, mix)
    parts = [eval_exact(p, pi) for pi in pols]
    for k in got:
        assert got[k].value == pytest.approx(sum(w * q[k].value for w, q in zip(mix.weights, parts)), abs=1e-14)


def test_mixed_policy_validation():
    with pytest.raises(ValueError):
        MixedPolicy([OpenLoopPolicy([0])], [0.5])
    with pytest.raises(ValueError):
        MixedPolicy([OpenLoopPolicy([0]), OpenLoopPolicy([1])], [1.0, 0.0])
    mix = MixedPolicy.uniform([OpenLoopPolicy([0]), OpenLoopPolicy([1])])
    assert mix.support == 2 and mix.sample(0) in mix.policies


# -- the loop ------------------------------------------------------------------


def test_vacuous_constraints():
    rng = np.random.default_rng(3)
    m = random_pomdp(rng, S=3, T=2)
    p = product_of(m)
    res = run_eg(p, EgConfig(K=16, B=2.0, delta=1.0, rho=-10.0), exact_hook(), exact_evaluator())
    best = solve_exact(objective_problem(p)).value
    val = eval_exact(p, res.policy)["objective"].value
    assert val >= best - res.certificate.reward_gap
    assert res.certificate.exact and res.certificate.R_ref_source == "estimate"


def test_reward_gap_halves_when_k_quadruples():
    rng = np.random.default_rng(4)
    p = product_of(random_pomdp(rng, S=2, T=1))
    g = [run_eg(p, EgConfig(K=K, B=2.0, delta=0.5, rho=0.5)).certificate.reward_gap for K in (4, 16)]
    assert g[1] == pytest.approx(g[0] / 2)


def test_uniform_mixture_and_trace():
    rng = np.random.default_rng(5)
    p = product_of(random_pomdp(rng, S=3, T=1))
    res = run_eg(p, EgConfig(K=6, B=1.5, delta=0.4, rho=0.8))
    assert res.policy.support == 6
    np.testing.assert_allclose(res.policy.weights, 1 / 6)
    assert (res.trace[0].lambda_f, res.trace[0].lambda_c) == (0.5, 0.5)
    lines = res.trace_csv().strip().splitlines()
    assert lines[0] == "k,lambda_f,lambda_c,p_hat,r_hat,solver_gap" and len(lines) == 7
    assert res.lam_bar[0] == pytest.approx(np.mean([r.lambda_f for r in res.trace]))


def test_iteration_budget():
    rng = np.random.default_rng(6)
    p = product_of(random_pomdp(rng, S=3, T=2))
    with pytest.raises(IterationBudget):
        run_eg(p, EgConfig(K=10_000, B=1.0, delta=0.5, max_seconds=0.05))


def test_approximate_certificate_adds_solver_and_estimation_terms():
    rng = np.random.default_rng(7)
    p = product_of(random_pomdp(rng, S=3, T=1))
    cfg = EgConfig(K=4, B=2.0, delta=0.5, rho=0.5)
    res = run_eg(p, cfg, exact_hook(), mc_evaluator(n=400, seed=1))
    c = res.certificate
    assert not c.exact
    assert c.eps_est == pytest.approx(2 * cfg.B * max(max(r.p_radius, r.r_radius) for r in res.trace))
    assert c.reward_gap == pytest.approx(c.regret_term + c.eps_bp + 2 * c.eps_est)


@pytest.mark.parametrize("seed", range(3))
def test_no_regret_with_unit_dual_bound(seed):
    rng = np.random.default_rng(100 + seed)
    p = product_of(random_pomdp(rng, S=3, T=2))
    B, delta, rho = 1.0, 0.5, 1.0
    res = run_eg(p, EgConfig(K=32, B=B, delta=delta, rho=rho))
    vals = [{"objective": r.objective, "constraint": r.r_hat, "accept": r.p_hat} for r in res.trace]
    played = np.mean([lagrangian(v, (r.lambda_f, r.lambda_c), delta, rho) for v, r in zip(vals, res.trace)])
    best = min(np.mean([lagrangian(v, lam, delta, rho) for v in vals]) for lam in [(0, 0), (B, 0), (0, B)])
    assert played - best <= res.certificate.regret_term


def test_matches_occupancy_lp_on_small_mdp():
    p, delta, rho, r_star = constrained_mdp(np.random.default_rng(8))
    res = run_eg(p, EgConfig(K=64, B=5.0, delta=delta, rho=rho, r_star=r_star))
    ev = eval_exact(p, res.policy)
    c = res.certificate
    assert c.R_ref_source == "given"
    assert ev["objective"].value >= r_star - c.reward_gap
    assert ev["accept"].value >= 1 - delta - c.feasibility_gap
    assert ev["constraint"].value >= rho - c.feasibility_gap


# -- reports and support reduction ---------------------------------------------


def rows(pf, rc, ro):
    return [TraceRow(k + 1, 0.0, 0.0, a, b, c, 0.0, 0.0, 0.0) for k, (a, b, c) in enumerate(zip(pf, rc, ro))]


def test_feasibility_report_constant():
    rep = feasibility_report(rows([0.7] * 4, [1.5] * 4, [0] * 4), 0.2, 1.0)
    assert rep["accept"] == pytest.approx(-0.1) and rep["constraint"] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        feasibility_report([], 0.1, 0.0)


def test_feasibility_report_matches_mixture_estimate():
    rng = np.random.default_rng(9)
    p = product_of(random_pomdp(rng, S=3, T=2))
    delta, rho = 0.3, 1.0
    res = run_eg(p, EgConfig(K=5, B=2.0, delta=delta, rho=rho), exact_hook(), mc_evaluator(n=2000, seed=3))
    rep = feasibility_report(res.trace, delta, rho)
    mc = eval_mc(p, res.policy, n=2000, seed=11)
    tol = max(r.p_radius for r in res.trace) + mc["accept"].radius
    assert abs(rep["accept"] - (mc["accept"].value - 1 + delta)) <= tol
    tol = max(r.r_radius for r in res.trace) + mc["constraint"].radius
    assert abs(rep["constraint"] - (mc["constraint"].value - rho)) <= tol


def test_mixing_lp_single_and_dominated():
    np.testing.assert_array_equal(mixing_lp([1.0], [0.5], [0.5], 0.0, 0.0), [1.0])
    w = mixing_lp([1.0, 2.0], [0.5, 0.9], [0.5, 0.8], 0.4, 0.4)
    np.testing.assert_array_equal(w, [0.0, 1.0])
    with pytest.raises(InfeasibleLP):
        mixing_lp([1.0, 2.0], [0.5, 0.9], [0.5, 0.8], 1.0, 0.4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mixing_lp_matches_small_subset_search(seed):
    rng = np.random.default_rng(seed)
    K = 10
    ro, rc, pf = rng.random(K), rng.random(K), rng.random(K)
    c_min, f_min = np.quantile(rc, 0.6), np.quantile(pf, 0.6)
    try:
        want, _ = best_small_mixture(ro, rc, pf, c_min, f_min)
    except InfeasibleLP:
        with pytest.raises(InfeasibleLP):
            mixing_lp(ro, rc, pf, c_min, f_min)
        return
    w = mixing_lp(ro, rc, pf, c_min, f_min)
    assert np.count_nonzero(w) <= 3
    assert w.sum() == pytest.approx(1.0) and (w >= 0).all()
    assert rc @ w >= c_min - 1e-9 and pf @ w >= f_min - 1e-9
    assert ro @ w == pytest.approx(want, abs=1e-9)


def test_reduce_support_on_run():
    rng = np.random.default_rng(10)
    p = product_of(random_pomdp(rng, S=3, T=2))
    res = run_eg(p, EgConfig(K=10, B=2.0, delta=0.5, rho=1.0))
    red = reduce_support(res, 0.5, 1.0)
    assert red.feasible and red.policy.support <= 3
    ev = eval_exact(p, red.policy)
    slack = res.certificate.regret_term
    assert ev["accept"].value >= 0.5 - slack - 1e-9
    assert ev["constraint"].value >= 1.0 - slack - 1e-9
    assert ev["objective"].value == pytest.approx(red.objective, abs=1e-9)
    one = run_eg(p, EgConfig(K=1, B=2.0, delta=0.5, rho=1.0))
    assert reduce_support(one, 0.5, 1.0, slack=10.0).policy.support == 1


def test_reduce_support_infeasible_keeps_mixture():
    rng = np.random.default_rng(11)
    p = product_of(random_pomdp(rng, S=3, T=1))
    res = run_eg(p, EgConfig(K=4, B=1.0, delta=0.0, rho=100.0))
    red = reduce_support(res, 0.0, 100.0, slack=0.0)
    assert not red.feasible and red.policy is res.policy
