"""Command-line entry point: compile-spec, compile-product, plan, bench."""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .cpomdp import EgConfig, exact_evaluator, exact_hook, mc_evaluator, pbvi_hook, reduce_support, run_eg
from .errors import BlowUp
from .ltlf import AtomTable, compile_spec, to_dot
from .ltlf.export import to_json_dict
from .model import model_from_dict
from .product import build_product, product_stats
from .solve.pbvi import PbviConfig


def _atoms(text: str | None) -> AtomTable | None:
    if not text:
        return None
    return AtomTable([a.strip() for a in text.split(",") if a.strip()])


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_compile_spec(args) -> int:
    dfa = compile_spec(args.spec, _atoms(args.atoms))
    text = json.dumps(to_json_dict(dfa), indent=2) + "\n"
    if args.json:
        _write(Path(args.json), text)
    if args.dot:
        _write(Path(args.dot), to_dot(dfa))
    if not args.json:
        sys.stdout.write(text)
    return 0


def _load(path):
    """A model file, or the model inside a single-agent zoo file."""
    with open(path) as fh:
        data = json.load(fh)
    if "model" in data and data.get("kind") == "single":
        data = data["model"]
    return model_from_dict(data)


def _product(args):
    m = _load(args.model)
    dfa = compile_spec(args.spec, AtomTable(m.atoms))
    return build_product(m, dfa, prune=args.prune, goal_on_accept=args.goal_on_accept)


def cmd_compile_product(args) -> int:
    p = _product(args)
    print(json.dumps(product_stats(p), indent=2))
    return 0


def _policy_dict(policy) -> dict:
    return {
        "weights": policy.weights.tolist(),
        "policies": [pi.to_dict() for pi in policy.policies],
    }


def cmd_plan(args) -> int:
    p = _product(args)
    if args.solver == "exact":
        opt, ev = exact_hook(), exact_evaluator()
    else:
        opt, ev = pbvi_hook(PbviConfig(timeout=args.timeout)), mc_evaluator(args.n_eval, args.seed)
    cfg = EgConfig(K=args.K, B=args.B, delta=args.delta, rho=args.rho, eta=args.eta, n_eval=args.n_eval,
                   seed=args.seed, goal_gamma=args.gamma)
    res = run_eg(p, cfg, opt, ev)
    policy = res.policy
    extra = {}
    if args.reduce_support:
        red = reduce_support(res, args.delta, args.rho)
        policy = red.policy
        extra = {"reduced": True, "lp_feasible": red.feasible, "lp_objective": red.objective}
    out = Path(args.out)
    _write(out / "policy.json", json.dumps(_policy_dict(policy)) + "\n")
    cert = res.certificate.to_dict() | {"eta": res.eta, "lambda_bar": list(res.lam_bar)} | extra
    _write(out / "certificate.json", json.dumps(cert, indent=2) + "\n")
    _write(out / "trace.csv", res.trace_csv())
    print(json.dumps(cert, indent=2))
    return 0


def cmd_bench(args) -> int:
    from .bench import emit_table, load_zoo, run_experiment, suite
    from .bench.runner import compile_entry

    zoo = load_zoo()
    models = [m.strip() for m in args.models.split(",")] if args.models else None
    exps = suite(zoo, args.suite, models, K=args.K, seed=args.seed, pbvi_trials=args.trials)
    if not exps:
        print("no matching models", file=sys.stderr)
        return 2
    out = Path(args.out)
    if args.jobs > 1:
        # experiments are independent; each worker loads the zoo itself
        with ProcessPoolExecutor(args.jobs) as pool:
            done = list(pool.map(run_experiment, exps))
    else:
        done = [run_experiment(x, zoo) for x in exps]
    rows = []
    for x, row in zip(exps, done):
        rows.append(row)
        _write(out / f"{x.model}.json", json.dumps(row.to_dict(), indent=1) + "\n")
        try:
            _, dfas = compile_entry(zoo, zoo[x.model], x.spec)
        except BlowUp:
            dfas = {}
        for name, d in dfas.items():
            _write(out / f"{x.model}.{name}.dot", to_dot(d, name))
        print(f"{x.model}: {row.status}", file=sys.stderr)
    csv_text, table = emit_table(rows)
    _write(out / "results.csv", csv_text)
    _write(out / "results.txt", table)
    sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ltlfpomdp", description="LTLf-constrained POMDP planning")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile-spec", help="compile an LTLf formula to a minimal DFA")
    c.add_argument("spec")
    c.add_argument("--atoms", help="comma-separated atom order")
    c.add_argument("--json", help="write canonical JSON here (default: stdout)")
    c.add_argument("--dot", help="write Graphviz DOT here")
    c.set_defaults(func=cmd_compile_spec)

    for name, func, helptext in (("compile-product", cmd_compile_product, "product statistics"),
                                 ("plan", cmd_plan, "run the exponentiated-gradient planner")):
        c = sub.add_parser(name, help=helptext)
        c.add_argument("--model", required=True)
        c.add_argument("--spec", required=True)
        c.add_argument("--prune", action="store_true", help="drop unreachable product states")
        c.add_argument("--goal-on-accept", action="store_true", help="goal set = accepting product states")
        c.set_defaults(func=func)
    c.add_argument("--delta", type=float, required=True)
    c.add_argument("--rho", type=float, default=0.0)
    c.add_argument("--B", type=float, required=True)
    c.add_argument("--K", type=int, required=True)
    c.add_argument("--eta", type=float)
    c.add_argument("--gamma", type=float, default=0.99, help="discount of the goal-model surrogate")
    c.add_argument("--solver", choices=("exact", "pbvi"), default="pbvi")
    c.add_argument("--n-eval", type=int, default=2000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--timeout", type=float, default=30.0, help="seconds per point-based solve")
    c.add_argument("--reduce-support", action="store_true")
    c.add_argument("--out", default="plan_out")

    c = sub.add_parser("bench", help="run the benchmark suite")
    c.add_argument("--suite", choices=("small", "paper"), default="small")
    c.add_argument("--models", help="comma-separated ids, e.g. M1,M2")
    c.add_argument("--out", default="bench_out")
    c.add_argument("--K", type=int, default=20)
    c.add_argument("--trials", type=int, default=20, help="point-based trials per solve")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--jobs", type=int, default=1, help="experiments run in parallel processes")
    c.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
