"""Experiment runner: compile, build the product, run the EG loop, evaluate."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..cpomdp import EgConfig, MixedPolicy, eval_mc, exact_hook, mc_evaluator, pbvi_hook, run_eg
from ..errors import BlowUp
from ..ltlf import AtomTable, compile_spec
from ..model import Geometric, GoalSet, validate
from ..multiagent import build_coordinator, build_ma_product
from ..product import build_product
from ..solve import objective_problem
from ..solve.pbvi import PbviConfig
from .zoo import Zoo, ZooEntry, load_zoo

N_FINAL = 200


@dataclass(frozen=True)
class Experiment:
    model: str
    spec: str
    delta: float
    B: float
    K: int = 20
    rho: float = 0.0
    solver: str = "pbvi"  # "pbvi" or "exact"
    seed: int = 0
    n_final: int = N_FINAL
    n_eval: int = 500
    pbvi_trials: int = 20
    pbvi_depth: int = 100
    normalize: bool = True  # scale geometric-horizon rewards by (1 - gamma)

    @classmethod
    def table(cls, entry: ZooEntry, **kw) -> "Experiment":
        """The benchmark settings stored with a zoo entry."""
        return cls(entry.id, entry.spec, entry.delta, entry.B, **kw)


@dataclass
class ResultRow:
    model: str
    spec: str
    objective: float | None
    objective_radius: float | None
    satisfaction: float | None
    satisfaction_radius: float | None
    level: float  # 1 - delta
    B: float
    reward_gap: float | None
    feasibility_gap: float | None
    seconds: float
    seed: int
    K: int
    status: str = "ok"  # or "blowup: <reason>"
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def compile_entry(zoo: Zoo, e: ZooEntry, spec: str | None = None, normalize: bool = False):
    """``(product, dfas)`` for a zoo entry; multi-agent entries give the coordinator.

    Goal states of goal models earn zero reward.  With ``normalize`` the
    rewards of geometric-horizon models are multiplied by ``1 - gamma``, so
    the objective is the long-run reward per step and lives on the same
    scale as the satisfaction probability and the dual bound ``B``.
    """
    spec = spec or e.spec
    if e.multiagent:
        if spec != e.spec:
            raise ValueError("multi-agent entries carry their own split specification")
        bundle = e.bundle()
        p = build_coordinator(build_ma_product(e.model, bundle))
        dfas = {"shared": bundle.shared, **{f"agent{i + 1}": d for i, d in enumerate(bundle.local)}}
    else:
        dfa = compile_spec(zoo.specs[spec], AtomTable(e.model.atoms))
        p = build_product(e.model, dfa, prune=True, goal_on_accept=e.goal_on_accept)
        dfas = {spec: dfa}
    if isinstance(p.horizon, GoalSet):
        p.ro[list(p.horizon.goals)] = 0.0
    if normalize and isinstance(p.horizon, Geometric):
        p.ro = p.ro * (1.0 - p.horizon.gamma)
        p.rc = p.rc * (1.0 - p.horizon.gamma)
    p.bounds = validate(p)
    return p, dfas


def _solver(x: Experiment):
    if x.solver == "exact":
        return exact_hook()
    if x.solver == "pbvi":
        # trial and depth budgets (not wall time) keep runs reproducible
        return pbvi_hook(PbviConfig(timeout=math.inf, max_trials=x.pbvi_trials, max_depth=x.pbvi_depth))
    raise ValueError(f"unknown solver {x.solver!r}")


def run_experiment(x: Experiment, zoo: Zoo | None = None) -> ResultRow:
    """Full pipeline; identical experiments give identical rows (up to ``seconds``)."""
    zoo = zoo or load_zoo()
    e = zoo[x.model]
    t0 = time.monotonic()
    try:
        p, _ = compile_entry(zoo, e, x.spec, x.normalize)
    except BlowUp as err:
        return ResultRow(x.model, x.spec, None, None, None, None, 1.0 - x.delta, x.B, None, None,
                         time.monotonic() - t0, x.seed, x.K, f"blowup: {err}")
    extra = {"states": p.n_states, "actions": p.n_actions}
    if vacuous(p, x.delta, x.rho):
        # both constraints hold for every policy: one solve of the objective alone
        resp = _solver(x)(objective_problem(p))
        policy, gaps = MixedPolicy.uniform([resp.policy]), (resp.gap, 0.0)
        extra |= {"baseline": True, "lambda_bar": [0.0, 0.0]}
    else:
        cfg = EgConfig(K=x.K, B=x.B, delta=x.delta, rho=x.rho, seed=x.seed)
        res = run_eg(p, cfg, _solver(x), mc_evaluator(x.n_eval, x.seed))
        policy, gaps = res.policy, (res.certificate.reward_gap, res.certificate.feasibility_gap)
        extra |= {"lambda_bar": list(res.lam_bar), "eta": res.eta, "trace": [asdict(r) for r in res.trace]}
    # iteration k evaluates with stream (seed, k), k >= 1; stream 0 is the final evaluation
    final = eval_mc(p, policy, x.n_final, seed=(x.seed, 0))
    return ResultRow(
        x.model, x.spec, final["objective"].value, final["objective"].radius, final["accept"].value,
        final["accept"].radius, round(1.0 - x.delta, 12), x.B, gaps[0], gaps[1],
        time.monotonic() - t0, x.seed, x.K, extra=extra,
    )


def vacuous(p, delta: float, rho: float) -> bool:
    """True when delta = 1, rho <= 0 and no constraint reward is negative."""
    rc = getattr(p, "rc", None)
    return delta >= 1.0 and rho <= 0.0 and (rc is None or bool(np.all(np.asarray(rc) >= 0.0)))


# -- tables ----------------------------------------------------------------------

COLUMNS = ["Model", "Spec", "R", "R_radius", "Rf", "Rf_radius", "1-delta", "B", "reward_gap",
           "feasibility_gap", "seconds", "status"]


def _fmt(v, digits=3) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def _cells(r: ResultRow, timing: bool) -> list:
    return [r.model, r.spec, _fmt(r.objective), _fmt(r.objective_radius), _fmt(r.satisfaction),
            _fmt(r.satisfaction_radius), _fmt(r.level, 2), _fmt(r.B, 1), _fmt(r.reward_gap),
            _fmt(r.feasibility_gap), _fmt(r.seconds, 1) if timing else "-", r.status]


def _order(rows):
    def key(r):
        base = r.model.removesuffix("-small")
        return (int(base[1:]) if base[1:].isdigit() else math.inf, r.model, r.spec, r.seed)

    return sorted(rows, key=key)


def emit_table(rows, timing: bool = True) -> tuple[str, str]:
    """``(csv_text, text_table)`` with a stable row order and "-" for missing values.

    ``timing=False`` blanks the wall-time column so the CSV can be diffed
    against a stored copy.
    """
    rows = _order(rows)
    if not rows:
        raise ValueError("need at least one row")
    body = [_cells(r, timing) for r in rows]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    w.writerows(body)
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(COLUMNS)]
    lines = ["  ".join(c.ljust(n) for c, n in zip(line, widths)).rstrip() for line in [COLUMNS] + body]
    return buf.getvalue(), "\n".join(lines) + "\n"


def suite(zoo: Zoo, name: str = "small", models=None, **kw) -> list:
    """Benchmark experiments for the chosen suite (optionally a subset of model ids)."""
    ids = zoo.ids(name)
    if models:
        want = set(models)
        ids = [i for i in ids if i in want or i.removesuffix("-small") in want]
    return [Experiment.table(zoo[i], **kw) for i in ids]
