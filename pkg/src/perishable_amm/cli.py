"""Command-line entry point: ``perishable-amm <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import beliefs
from .clearing import EXHAUSTIVE_LIMIT, build_auction_graph, exact_max_weight_matching, greedy_matching, residual_edges
from .errors import AMMError, ScenarioValidationError
from .orders import Bid, UnitListing
from .sim.engine import run
from .sim.report import dumps, report
from .sim.scenario import load_scenario
from .sim.trace import read_csv
from .sim.verify import verify_run

EXPERIMENT_KEYS = {"c_star", "shares", "distribution", "sigma", "seed", "provider", "a_grid",
                   "replicas", "profit", "density"}


def _cmd_run(args):
    scenario = load_scenario(Path(args.scenario))
    result = run(scenario, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.trace.write_csv(out / "trace.csv", public=True)
    summary = report(result.trace)
    (out / "summary.json").write_text(dumps(summary), encoding="utf-8")
    print(f"{len(result.trace)} events -> {out / 'trace.csv'}")
    return 0


def _cmd_verify(args):
    scenario = load_scenario(Path(args.scenario))
    rep = verify_run(run(scenario, seed=args.seed))
    print("\n".join(rep.lines()))
    return 0 if rep.ok else 1


def _cmd_report(args):
    sys.stdout.write(dumps(report(read_csv(Path(args.trace)))))
    return 0


def load_experiment(path):
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    unknown = sorted(set(doc) - EXPERIMENT_KEYS)
    if unknown:
        raise ScenarioValidationError([f"{k}: unknown field" for k in unknown])
    model = beliefs.BeliefModel(
        c_star=float(doc["c_star"]),
        shares=doc["shares"],
        distribution=doc.get("distribution", "lognormal"),
        sigma=float(doc.get("sigma", 0.25)),
        seed=int(doc.get("seed", 0)),
    )
    return model, doc


def _cmd_beliefs(args):
    model, doc = load_experiment(args.experiment)
    width = float((doc.get("profit") or {}).get("width", 1.0))
    profit = beliefs.ProfitFunction.peaked(model.c_star, width)
    rows = beliefs.honesty_experiment(
        model, profit, int(doc.get("provider", 0)), [float(a) for a in doc.get("a_grid", [0.5, 1.0, 2.0])],
        int(doc.get("replicas", 100_000)),
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            beliefs.write_honesty_csv(rows, fh)
    else:
        beliefs.write_honesty_csv(rows, sys.stdout)
    dens = doc.get("density")
    if dens:
        rep = beliefs.density_transform_check(
            model, int(doc.get("provider", 0)), float(dens.get("a", 2.0)),
            bins=int(dens.get("bins", 64)), replicas=int(dens.get("replicas", 10**6)),
        )
        print(f"# density discrepancy {rep.discrepancy!r}", file=sys.stderr)
    return 0


def clearing_bench(max_size=8, instances=10_000, seed=0, top_price=20):
    """Greedy versus exact matching on random books with integer prices."""
    rng = np.random.default_rng(seed)
    worst_ratio = 1.0
    bound_ok = maximal_ok = True
    for _ in range(instances):
        nu, nb = rng.integers(0, max_size + 1, size=2)
        units = [UnitListing(f"u{i:02d}", "lp", float(p)) for i, p in enumerate(rng.integers(1, top_price + 1, nu))]
        bids = [Bid(f"b{i:02d}", "user", float(p), float(p), 0, seq=i)
                for i, p in enumerate(rng.integers(1, top_price + 1, nb))]
        g = greedy_matching(units, bids)
        graph = build_auction_graph(units, bids)
        method = "exhaustive" if nu + nb <= EXHAUSTIVE_LIMIT else "hungarian"
        exact = exact_max_weight_matching(graph, method).weight
        if exact > 0:
            worst_ratio = min(worst_ratio, g.weight / exact)
        bound_ok &= g.iterations <= nu + nb
        maximal_ok &= not residual_edges(g)
    return {"instances": instances, "max_size": max_size, "seed": seed, "min_ratio": worst_ratio,
            "iteration_bound_held": bool(bound_ok), "always_maximal": bool(maximal_ok)}


def _cmd_bench(args):
    res = clearing_bench(args.max_size, args.instances, args.seed)
    print(json.dumps(res, indent=2, sort_keys=True))
    ok = res["min_ratio"] >= 0.5 and res["iteration_bound_held"] and res["always_maximal"]
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="perishable-amm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write trace.csv and summary.json")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", default="out")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("verify", help="simulate a scenario and check every invariant")
    v.add_argument("scenario")
    v.add_argument("--seed", type=int)
    v.set_defaults(func=_cmd_verify)

    rep = sub.add_parser("report", help="summarize a trace CSV")
    rep.add_argument("trace")
    rep.set_defaults(func=_cmd_report)

    b = sub.add_parser("beliefs", help="run a belief-model honesty experiment")
    b.add_argument("experiment")
    b.add_argument("--out")
    b.set_defaults(func=_cmd_beliefs)

    cb = sub.add_parser("clearing-bench", help="greedy versus exact matching sweep")
    cb.add_argument("--max-size", type=int, default=8)
    cb.add_argument("--instances", type=int, default=1000)
    cb.add_argument("--seed", type=int, default=0)
    cb.set_defaults(func=_cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AMMError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
