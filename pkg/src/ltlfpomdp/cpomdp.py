"""Exponentiated-gradient Lagrangian method for constrained product POMDPs.

The dual player keeps ``(lambda_f, lambda_c)`` on the simplex
``{lambda >= 0, lambda_f + lambda_c <= B}``; each round an unconstrained
solver best-responds to the current multipliers, the constraint channels of
its policy are evaluated, and the multipliers take one multiplicative step.
The output is the uniform mixture of the best responses.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleLP, IterationBudget
from .model import LabeledPomdp, validate
from .product import eval_channels
from .rollout import Estimate, rollout_channels
from .solve.exact import solve_exact
from .solve.pbvi import PbviConfig, solve_pbvi
from .solve.scalarize import GOAL_GAMMA, lagrangian_problem

LOG3 = math.log(3.0)


# -- duals ---------------------------------------------------------------------


@dataclass(frozen=True)
class LagrangePoint:
    f: float
    c: float
    B: float

    def __post_init__(self):
        if self.f < 0 or self.c < 0 or self.f + self.c > self.B * (1 + 1e-12):
            raise ValueError(f"({self.f}, {self.c}) is not on the simplex of size {self.B}")

    @property
    def slack(self) -> float:
        return max(self.B - self.f - self.c, 0.0)

    @classmethod
    def start(cls, B: float) -> "LagrangePoint":
        return cls(B / 3.0, B / 3.0, B)


def lagrangian(values, lam, delta: float, rho: float) -> float:
    """``R_o + lambda_c (R_c - rho) + lambda_f (R^f - 1 + delta)``.

    ``values`` maps channel names to numbers (or estimates).
    """
    v = {k: float(getattr(x, "value", x)) for k, x in values.items()}
    lf, lc = (lam.f, lam.c) if isinstance(lam, LagrangePoint) else lam
    return v["objective"] + lc * (v["constraint"] - rho) + lf * (v["accept"] - 1.0 + delta)


def eg_step_formula(lam: LagrangePoint, p_hat, r_hat, eta, delta, rho) -> LagrangePoint:
    """The multiplicative update written out term by term."""
    ef = math.exp(-eta * (p_hat - 1.0 + delta))
    ec = math.exp(-eta * (r_hat - rho))
    den = lam.B + lam.f * (ef - 1.0) + lam.c * (ec - 1.0)
    return LagrangePoint(lam.B * lam.f * ef / den, lam.B * lam.c * ec / den, lam.B)


def eg_step(lam: LagrangePoint, p_hat: float, r_hat: float, eta: float, delta: float, rho: float) -> LagrangePoint:
    """One multiplicative-weights step on the B-scaled three-point simplex.

    The denominator ``B + lf (e_f - 1) + lc (e_c - 1)`` equals
    ``slack + lf e_f + lc e_c``; the weights are normalized in log space so
    the result stays finite for any step size.
    """
    xf = -eta * (p_hat - 1.0 + delta)
    xc = -eta * (r_hat - rho)
    # log-weights of the three coordinates; zero coordinates stay zero
    logs = [math.log(v) + x if v > 0 else -math.inf for v, x in ((lam.f, xf), (lam.c, xc), (lam.slack, 0.0))]
    top = max(logs)
    wf, wc, ws = (math.exp(v - top) for v in logs)
    den = wf + wc + ws
    f = lam.B * wf / den
    c = lam.B * wc / den
    if f + c > lam.B:  # rounding
        c = max(lam.B - f, 0.0)
    return LagrangePoint(f, c, lam.B)


# -- policies ------------------------------------------------------------------


@dataclass
class MixedPolicy:
    """Finite distribution over pure policies, sampled once per run."""

    policies: list
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.policies) != self.weights.size or not len(self.policies):
            raise ValueError("need one positive weight per policy")
        if (self.weights <= 0).any() or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")

    @classmethod
    def uniform(cls, policies) -> "MixedPolicy":
        k = len(policies)
        return cls(list(policies), np.full(k, 1.0 / k))

    @property
    def support(self) -> int:
        return len(self.policies)

    def sample(self, rng) -> object:
        rng = np.random.default_rng(rng)
        return self.policies[int(rng.choice(self.support, p=self.weights))]


def _combine(parts: list[dict], weights) -> dict:
    out = {}
    for ch in parts[0]:
        out[ch] = Estimate(
            float(sum(w * p[ch].value for w, p in zip(weights, parts))),
            float(sum(w * p[ch].radius for w, p in zip(weights, parts))),
            all(p[ch].rigorous for p in parts),
        )
    return out


def eval_mc(p: LabeledPomdp, policy, n: int = 2000, seed=None, channel: str | None = None):
    """Monte Carlo channel estimates with 99% radii.

    Mixed policies are evaluated as the weighted sum of per-policy estimates.
    Returns one Estimate when ``channel`` is given, else a dict of all three.
    """
    if isinstance(policy, MixedPolicy):
        seeds = np.random.SeedSequence(seed).spawn(policy.support)
        parts = [rollout_channels(p, pi, n, s) for pi, s in zip(policy.policies, seeds)]
        out = _combine(parts, policy.weights)
    else:
        out = rollout_channels(p, policy, n, seed)
    return out[channel] if channel else out


def eval_exact(p: LabeledPomdp, policy, eps_trunc: float = 1e-10) -> dict:
    """Exact channel values (with truncation radii) of a pure or mixed policy."""
    if isinstance(policy, MixedPolicy):
        return _combine([eval_exact(p, pi, eps_trunc) for pi in policy.policies], policy.weights)
    vals = eval_channels(p, policy, eps_trunc=eps_trunc)
    return {k: Estimate(v.value, v.trunc) for k, v in vals.items()}


# -- solver and evaluator hooks ------------------------------------------------


class Response(NamedTuple):
    policy: object
    gap: float  # bound on suboptimality for the scalarized problem


def exact_hook(eps_trunc: float = 1e-10, node_cap: int = 1_000_000) -> Callable:
    def opt(sp):
        sol = solve_exact(sp, eps_trunc=eps_trunc, node_cap=node_cap)
        return Response(sol.policy, 2.0 * sol.tail)

    opt.exact = True
    return opt


def pbvi_hook(cfg: PbviConfig | None = None) -> Callable:
    def opt(sp):
        res = solve_pbvi(sp, cfg)
        return Response(res.policy, max(res.gap, 0.0))

    opt.exact = False
    return opt


def exact_evaluator(eps_trunc: float = 1e-10) -> Callable:
    def ev(p, policy, k):
        return eval_exact(p, policy, eps_trunc)

    ev.exact = True
    return ev


def mc_evaluator(n: int = 2000, seed: int = 0) -> Callable:
    def ev(p, policy, k):
        return eval_mc(p, policy, n, seed=(seed, k))

    ev.exact = False
    return ev


# -- the loop ------------------------------------------------------------------


@dataclass
class EgConfig:
    K: int
    B: float
    delta: float
    rho: float = 0.0
    eta: float | None = None  # default sqrt(log 3 / (2 K B^2 G^2))
    n_eval: int = 2000
    seed: int = 0
    max_seconds: float | None = None
    r_star: float | None = None  # known optimum, if any; tightens the feasibility gap
    goal_gamma: float = GOAL_GAMMA  # discount of the goal-model surrogate

    def __post_init__(self):
        if self.K < 1 or self.B <= 0 or not 0.0 <= self.delta <= 1.0:
            raise ValueError("need K >= 1, B > 0 and 0 <= delta <= 1")


def default_eta(K: int, B: float, G: float) -> float:
    return math.sqrt(LOG3 / (2.0 * K * B * B * G * G))


def regret_bound(K: int, B: float, G: float) -> float:
    return 2.0 * B * G * math.sqrt(2.0 * LOG3 / K)


@dataclass
class TraceRow:
    k: int
    lambda_f: float
    lambda_c: float
    p_hat: float
    r_hat: float
    objective: float
    solver_gap: float
    p_radius: float
    r_radius: float


@dataclass
class GapCertificate:
    reward_gap: float
    feasibility_gap: float
    regret_term: float
    eps_bp: float
    eps_est: float
    G: float
    R_m: float
    R_ref: float
    R_ref_source: str  # "given" when R_ref is a known optimum, "estimate" otherwise
    exact: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EgResult:
    policy: MixedPolicy
    lam_bar: tuple
    certificate: GapCertificate
    trace: list = field(default_factory=list)
    eta: float = 0.0

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["k", "lambda_f", "lambda_c", "p_hat", "r_hat", "solver_gap"])
        for r in self.trace:
            w.writerow([r.k, repr(r.lambda_f), repr(r.lambda_c), repr(r.p_hat), repr(r.r_hat), repr(r.solver_gap)])
        return buf.getvalue()


def run_eg(p: LabeledPomdp, cfg: EgConfig, opt: Callable | None = None, evaluator: Callable | None = None) -> EgResult:
    """Run K rounds and return the uniform mixture with its gap certificate."""
    bounds = getattr(p, "bounds", None) or validate(p)
    G = bounds.G
    eta = cfg.eta if cfg.eta is not None else default_eta(cfg.K, cfg.B, G)
    opt = opt or exact_hook()
    evaluator = evaluator or exact_evaluator()
    lam = LagrangePoint.start(cfg.B)
    t0 = time.monotonic()
    policies, trace, lams = [], [], []
    for k in range(1, cfg.K + 1):
        if cfg.max_seconds is not None and time.monotonic() - t0 > cfg.max_seconds:
            raise IterationBudget(f"stopped after {k - 1} of {cfg.K} rounds ({cfg.max_seconds} s budget)")
        sp = lagrangian_problem(p, lam, cfg.delta, cfg.rho, cfg.goal_gamma)
        resp = opt(sp)
        vals = evaluator(p, resp.policy, k)
        acc, con = vals["accept"], vals["constraint"]
        trace.append(TraceRow(k, lam.f, lam.c, acc.value, con.value, vals["objective"].value, resp.gap,
                              acc.radius, con.radius))
        lams.append((lam.f, lam.c))
        policies.append(resp.policy)
        lam = eg_step(lam, acc.value, con.value, eta, cfg.delta, cfg.rho)
    mixed = MixedPolicy.uniform(policies)
    lam_bar = tuple(np.mean(lams, axis=0).tolist())
    cert = certificate(trace, cfg, bounds, exact=getattr(opt, "exact", False) and getattr(evaluator, "exact", False))
    return EgResult(mixed, lam_bar, cert, trace, eta)


def certificate(trace: Sequence[TraceRow], cfg: EgConfig, bounds, exact: bool) -> GapCertificate:
    """Reward and feasibility gaps of the uniform mixture over ``trace``.

    With approximate hooks the regret term is widened by
    ``eps_bp + 2 eps_est``, where ``eps_bp`` is the largest reported solver
    gap and ``eps_est / (2B)`` the largest estimator radius.
    """
    K = len(trace)
    G = bounds.G
    regret = regret_bound(K, cfg.B, G)
    eps_bp = max(r.solver_gap for r in trace)
    eps_est = 2.0 * cfg.B * max(max(r.p_radius, r.r_radius) for r in trace)
    reward_gap = regret + eps_bp + 2.0 * eps_est
    if cfg.r_star is not None:
        ref, source = cfg.r_star, "given"
    else:
        ref, source = float(np.mean([r.objective for r in trace])), "estimate"
    feas = max((bounds.R_m - ref + reward_gap) / cfg.B, 0.0)
    return GapCertificate(reward_gap, feas, regret, eps_bp, eps_est, G, bounds.R_m, ref, source, exact)


def feasibility_report(trace: Sequence[TraceRow], delta: float, rho: float) -> dict:
    """Mean slack of the spec and reward constraints over the iterates."""
    if not trace:
        raise ValueError("empty trace")
    return {
        "accept": float(np.mean([r.p_hat - 1.0 + delta for r in trace])),
        "constraint": float(np.mean([r.r_hat - rho for r in trace])),
    }


# -- support reduction ---------------------------------------------------------


@dataclass
class Reduced:
    policy: MixedPolicy
    weights: np.ndarray  # over all K iterates
    objective: float
    feasible: bool


def reduce_support(result: EgResult, delta: float, rho: float, slack: float | None = None) -> Reduced:
    """Re-weight the iterates by a basic optimal solution of the mixing LP.

    maximize sum_k w_k R_o(k) subject to sum_k w_k R_c(k) >= rho - slack,
    sum_k w_k R^f(k) >= 1 - delta - slack, w >= 0, sum_k w_k = 1.  At most
    three weights are nonzero.  ``slack`` defaults to the regret term.  If
    the LP is infeasible the uniform mixture is returned with
    ``feasible=False``.
    """
    tr = result.trace
    if slack is None:
        slack = result.certificate.regret_term
    ro = np.array([r.objective for r in tr])
    rc = np.array([r.r_hat for r in tr])
    pf = np.array([r.p_hat for r in tr])
    try:
        w = mixing_lp(ro, rc, pf, rho - slack, 1.0 - delta - slack)
    except InfeasibleLP:
        K = len(tr)
        return Reduced(result.policy, np.full(K, 1.0 / K), float(ro.mean()), False)
    keep = np.flatnonzero(w > 0)
    mixed = MixedPolicy([result.policy.policies[i] for i in keep], w[keep] / w[keep].sum())
    return Reduced(mixed, w, float(ro @ w), True)


def mixing_lp(ro, rc, pf, c_min: float, f_min: float) -> np.ndarray:
    """Basic optimal weights of the mixing LP (support at most three)."""
    ro, rc, pf = (np.asarray(x, dtype=float) for x in (ro, rc, pf))
    K = ro.size
    res = linprog(
        -ro,
        A_ub=-np.vstack([rc, pf]),
        b_ub=-np.array([c_min, f_min]),
        A_eq=np.ones((1, K)),
        b_eq=[1.0],
        bounds=[(0, None)] * K,
        method="highs-ds",
    )
    if res.status != 0:
        raise InfeasibleLP(res.message)
    w = np.clip(res.x, 0.0, None)
    w[w < 1e-13] = 0.0
    w = _to_vertex(w, np.vstack([rc, pf, np.ones(K)]), ro)
    return w / w.sum()


def _to_vertex(w: np.ndarray, A: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Move within ``{A x = A w, x >= 0}`` without lowering ``c x`` until ``|supp| <= rows(A)``.

    ``A`` must contain the all-ones row, so every null direction has a
    negative entry and each step zeroes one weight.
    """
    w = w.copy()
    while True:
        supp = np.flatnonzero(w > 0)
        if supp.size <= A.shape[0]:
            return w
        d = np.linalg.svd(A[:, supp])[2][-1]
        if c[supp] @ d < 0:
            d = -d
        neg = np.flatnonzero(d < 0)
        ratios = w[supp][neg] / -d[neg]
        j = int(np.argmin(ratios))
        w[supp] += ratios[j] * d
        w[supp[neg[j]]] = 0.0
        w = np.clip(w, 0.0, None)


def best_small_mixture(ro, rc, pf, c_min: float, f_min: float, max_support: int = 3):
    """Brute force over supports of size <= ``max_support`` and their LP vertices.

    Returns ``(value, weights)``; used to cross-check the mixing LP.
    """
    ro, rc, pf = (np.asarray(x, dtype=float) for x in (ro, rc, pf))
    K = ro.size
    best, best_w = -math.inf, None
    for size in range(1, max_support + 1):
        for sub in itertools.combinations(range(K), size):
            sub = list(sub)
            # inequality rows a x >= b: the two constraints and x_i >= 0
            A = [rc[sub], pf[sub]] + [np.eye(size)[i] for i in range(size)]
            b = [c_min, f_min] + [0.0] * size
            for active in itertools.combinations(range(len(A)), size - 1):
                M = np.vstack([np.ones(size)] + [A[i] for i in active])
                rhs = np.array([1.0] + [b[i] for i in active])
                if abs(np.linalg.det(M)) < 1e-12:
                    continue
                x = np.linalg.solve(M, rhs)
                if (x < -1e-12).any():
                    continue
                if rc[sub] @ x < c_min - 1e-9 or pf[sub] @ x < f_min - 1e-9:
                    continue
                v = float(ro[sub] @ x)
                if v > best:
                    best = v
                    best_w = np.zeros(K)
                    best_w[sub] = np.clip(x, 0, None)
    if best_w is None:
        raise InfeasibleLP("no mixture of at most three policies is feasible")
    return best, best_w
