"""Exact expected ratios on the near-equal instance x_i = 1 + i*eps.

Enumerates every known subset (and every tie order) so the numbers carry no
sampling noise, then prints them next to the closed forms they should meet.
"""
import argparse

from limsched import analysis, harness
from limsched.analysis import BoundQuery
from limsched.instances import JobInstance
from limsched.policies import PolicyConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--eps", type=float, default=1e-6)
    args = ap.parse_args()

    x = JobInstance(tuple(1 + (i + 1) * args.eps for i in range(args.n)))
    opt = harness.opt_objective(x)
    print("B,switch,switch_formula,crrr,crrr_lo,crrr_hi,mixture,mixture_formula,outcomes")
    for B in range(args.n + 1):
        q = BoundQuery(args.n, B)
        sw, c1 = harness.exact_expected_objective(PolicyConfig("switch"), x, B)
        cr, c2 = harness.exact_expected_objective(PolicyConfig("crrr"), x, B)
        mx, c3 = harness.exact_expected_objective(PolicyConfig("mixture"), x, B)
        lo, hi = analysis.crrr_range(q)
        print(f"{B},{sw / opt:.6f},{analysis.switch_perfect(q):.6f},{cr / opt:.6f},{lo:.6f},{hi:.6f},"
              f"{mx / opt:.6f},{analysis.mixture_perfect(q):.6f},{c1 + c2 + c3}")


if __name__ == "__main__":
    main()
