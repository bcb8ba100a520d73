"""Run the figure presets and write one CSV and one SVG per preset.

    python3 scripts/run_figures.py --trials 2000 fig2 fig4
    python3 scripts/run_figures.py            # every preset at full size

The full presets use 10^4 trials per coordinate and take hours on one core;
--trials scales them down for a quick look.
"""
import argparse
import dataclasses
import logging
import pathlib
import time

from limsched import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("presets", nargs="*", default=list(harness.PRESETS), help=", ".join(harness.PRESETS))
    ap.add_argument("--trials", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.presets:
        spec = harness.preset(name)
        overrides = {k: v for k, v in (("trials", args.trials), ("seed", args.seed)) if v is not None}
        if overrides and spec.kind == "simulation":
            spec = dataclasses.replace(spec, **overrides)
        t0 = time.perf_counter()
        rows = harness.run_experiment(spec, out / f"{name}.csv", workers=args.workers)
        x, series = harness.default_axes(rows)
        harness.render_svg(rows, x, series, out / f"{name}.svg", bands=spec.kind == "simulation", title=name)
        failed = sum(r.error is not None for r in rows)
        print(f"{name}: {len(rows)} rows, {failed} failed, {time.perf_counter() - t0:.1f}s -> {out / name}.csv")


if __name__ == "__main__":
    main()
