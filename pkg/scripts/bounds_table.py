"""Print the closed-form bounds over a grid of known fractions for one n."""
import argparse

from limsched import analysis
from limsched.analysis import BoundQuery


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--steps", type=int, default=10)
    ap.add_argument("--rho", type=float, default=None, help="add the randomized-breakpoint bound at zero error")
    args = ap.parse_args()

    alpha_poly = analysis.alpha_phi(analysis.PolyTailPhi(0.51))
    cols = ["w", "B", "lower_exp", "lower_heavy", "mixture", "switch", "crrr_lo", "crrr_hi"]
    if args.rho is not None:
        cols.append("noisy_switch")
    print(",".join(cols))
    for k in range(args.steps + 1):
        w = k / args.steps
        B = round(w * args.n)
        q = BoundQuery(args.n, B, w, args.rho, None, 0.0)
        lo, hi = analysis.crrr_range(q)
        vals = [w, B, analysis.lower_bound("exponentialfinite", q),
                analysis.lower_bound("asymptotic", q, alpha=alpha_poly),
                analysis.mixture_perfect(q), analysis.switch_perfect(q), lo, hi]
        if args.rho is not None:
            vals.append(analysis.lemma7(q))
        print(",".join(f"{v:.6f}" if isinstance(v, float) else str(v) for v in vals))


if __name__ == "__main__":
    main()
