"""Command-line entry point: ``simulate``, ``ratio``, ``bounds`` and ``experiment``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import analysis, harness
from .engine import run
from .instances import JobInstance, PredictionView, parse_noise
from .policies import parse_policy


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _add_policy_args(p):
    p.add_argument("--alg", required=True,
                   help="opt|rr|rtc|spjf|crrr|switch|noisy-switch|preferential|mixture")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--p", type=float, default=None, help="mixture probability of the first branch")
    p.add_argument("--total-view", action="store_true",
                   help="preferential inner policy sees total processed amounts instead of its own share")


def _policy(args):
    return parse_policy(args.alg, lam=args.lam, rho=args.rho, p=args.p, virtual=not args.total_view)


def cmd_simulate(args) -> int:
    x = JobInstance(tuple(_floats(args.sizes)))
    known = _ints(args.known) if args.known else []
    if args.predictions:
        preds = _floats(args.predictions)
        view = PredictionView(tuple(known), tuple(preds), x.n)
    else:
        view = PredictionView.perfect(x, known)
    config = _policy(args)
    policy = config.build(x, view)
    trace = run(policy, x, np.random.default_rng(args.seed))
    opt = harness.opt_objective(x)
    print("job,size,completion")
    for j, (s, t) in enumerate(zip(x.sizes, trace.completion)):
        print(f"{j},{s:.12g},{t:.12g}")
    print(f"objective={trace.objective:.12g} opt={opt:.12g} ratio={trace.objective / opt:.12g}")
    if args.trace:
        trace.write_csv(args.trace)
    return 0


def cmd_ratio(args) -> int:
    point = harness.Point("ratio", args.dist, args.n, args.B, _policy(args), args.noise or "none",
                          args.tau, args.trials, args.seed, harness._normalize_estimator(args.estimator),
                          True, args.exact, args.cap)
    row = harness.estimate_ratio(point)
    harness.write_csv([row], sys.stdout)
    return 0


def cmd_bounds(args) -> int:
    q = analysis.BoundQuery(args.n, args.B, args.w, args.rho, args.lam, args.error)
    rows = analysis.applicable_bounds(q)
    if args.csv:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["bound", "value"])
        for name, value in rows:
            w.writerow([name, repr(value)])
    else:
        width = max(len(name) for name, _ in rows)
        for name, value in rows:
            print(f"{name:<{width}}  {value:.6f}")
    return 0


def cmd_experiment(args) -> int:
    if args.preset:
        spec = harness.preset(args.preset)
    else:
        spec = harness.ExperimentSpec.from_json(args.config)
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        spec = harness.replace(spec, **overrides)
    rows = harness.run_experiment(spec, args.out, workers=args.workers)
    if args.svg:
        x, series = harness.default_axes(rows)
        harness.render_svg(rows, x, series, args.svg, bands=spec.kind == "simulation", title=spec.name)
    failed = sum(r.error is not None for r in rows)
    print(f"{len(rows)} rows written to {args.out}" + (f" ({failed} failed)" if failed else ""),
          file=sys.stderr)
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="limsched", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one policy on one instance")
    p.add_argument("--sizes", required=True, help="comma-separated job sizes")
    p.add_argument("--known", default="", help="comma-separated known job indices")
    p.add_argument("--predictions", default=None, help="predicted sizes for the known jobs (default: exact)")
    _add_policy_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", default=None, help="write the event log as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ratio", help="estimate E[ALG]/OPT at one coordinate")
    _add_policy_args(p)
    p.add_argument("--dist", required=True, help="exp:1, phi:0.51:10000, pareto:1:1.1, twopoint:1:2:0.5, ...")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--B", type=int, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--estimator", default="rom", choices=["rom", "mor"])
    p.add_argument("--exact", action="store_true", help="enumerate outcomes on one instance drawn from the seed")
    p.add_argument("--cap", type=int, default=harness.DEFAULT_CAP, help="enumeration cap")
    p.add_argument("--noise", default="none", help="none|gaussian|uniform|adversarial:c")
    p.add_argument("--tau", type=float, default=0.0)
    p.set_defaults(func=cmd_ratio)

    p = sub.add_parser("bounds", help="print every applicable bound")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--B", type=int, required=True)
    p.add_argument("--w", type=float, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--error", type=float, default=None, help="normalized error n E[eta] / OPT")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("experiment", help="run a preset or a JSON experiment spec")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", choices=harness.PRESETS)
    g.add_argument("--config", help="JSON file mirroring ExperimentSpec")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.add_argument("--trials", type=int, default=None, help="override the spec's trial count")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        # bad parameters, unknown policies or distributions, unreadable files
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
