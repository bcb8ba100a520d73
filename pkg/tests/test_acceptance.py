"""End-to-end acceptance checks. Each test prints one PASS/FAIL line."""
import itertools
import math
import time

import numpy as np
import pytest

from limsched import analysis, harness
from limsched.analysis import BoundQuery
from limsched.engine import delays_from_trace, mutual_delay_sum, run
from limsched.instances import (AdversarialConstant, GaussianNoise, JobInstance, PredictionView,
                                apply_noise, parse_distribution, sample_instance, sample_known_subset)
from limsched.policies import PolicyConfig, RtcPolicy, parse_policy

EPS = 1e-6
HARD10 = JobInstance(tuple(1 + i * EPS for i in range(1, 11)))


def _catalog(n, B):
    out = [PolicyConfig("opt"), PolicyConfig("rr"), PolicyConfig("rtc"), PolicyConfig("crrr"),
           PolicyConfig("switch"), PolicyConfig("noisy-switch", rho=0.5),
           parse_policy("preferential", lam=0.5, rho=0.3), PolicyConfig("mixture")]
    if B == n:
        out.append(PolicyConfig("spjf"))
    return out


def test_criterion_1_closed_form_oracles(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    dists = [parse_distribution(d) for d in ("exp:1", "pareto:1:1.1", "twopoint:1:2:0.5", "phi:0.51:10000",
                                             "const:2")]
    worst_closed = worst_identity = 0.0
    runs = 0
    for k in range(1000):
        n = int(rng.integers(1, 21))
        x = sample_instance(dists[k % len(dists)], n, rng)
        for kind, pol in (("opt", PolicyConfig("opt")), ("rr", PolicyConfig("rr"))):
            tr = run(pol.build(x, PredictionView.empty(n)), x)
            ref = analysis.closed_form_objective(kind, x)
            worst_closed = max(worst_closed, abs(tr.objective - ref) / ref)
        B = int(rng.integers(0, n + 1))
        known = sample_known_subset(n, B, rng)
        view = apply_noise(x, known, GaussianNoise(0.3), rng)
        # the identity is cheap per run, so cycle through the catalog
        cat = _catalog(n, B)
        for cfg in (cat[k % len(cat)], cat[(k + 3) % len(cat)]):
            if cfg.kind == "spjf" and B != n:
                continue
            tr = run(cfg.build(x, view), x, rng)
            P, _ = delays_from_trace(tr)
            lhs = math.fsum(x.sizes) + mutual_delay_sum(P)
            worst_identity = max(worst_identity, abs(lhs - tr.objective) / tr.objective)
            runs += 1
    dt = time.perf_counter() - t0
    ok = worst_closed <= 1e-9 and worst_identity <= 1e-9 and dt < 10
    acceptance(1, ok, f"max rel err closed forms {worst_closed:.2e}, delay identity {worst_identity:.2e} "
                      f"over {runs} catalog runs, {dt:.1f}s")


def test_criterion_1_every_catalog_policy_covered():
    rng = np.random.default_rng(7)
    x = sample_instance(parse_distribution("exp:1"), 6, rng)
    view = PredictionView.perfect(x, range(6))
    kinds = set()
    for cfg in _catalog(6, 6):
        tr = run(cfg.build(x, view), x, rng)
        P, _ = delays_from_trace(tr)
        assert math.isclose(math.fsum(x.sizes) + mutual_delay_sum(P), tr.objective, rel_tol=1e-9)
        kinds.add(cfg.kind)
    assert kinds == {"opt", "rr", "rtc", "crrr", "switch", "noisy-switch", "preferential", "mixture", "spjf"}


def test_criterion_2_rtc_expectation(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for n in range(1, 7):
        for _ in range(3):
            x = JobInstance(tuple(rng.exponential(1.0, n).tolist()))
            vals = [run(RtcPolicy(order), x, record=False).objective for order in itertools.permutations(range(n))]
            mean = math.fsum(vals) / len(vals)
            ref = analysis.closed_form_objective("rtc", x)
            worst = max(worst, abs(mean - ref) / ref)
    dt = time.perf_counter() - t0
    acceptance(2, worst <= 1e-9 and dt < 5, f"max rel err {worst:.2e} over n=1..6, {dt:.2f}s")


def test_criterion_3_switch_tightness(acceptance):
    t0 = time.perf_counter()
    opt = harness.opt_objective(HARD10)
    worst = 0.0
    for B in range(11):
        val, _ = harness.exact_expected_objective(PolicyConfig("switch"), HARD10, B)
        worst = max(worst, abs(val / opt - analysis.switch_perfect(BoundQuery(10, B))))
    dt = time.perf_counter() - t0
    acceptance(3, worst <= 1e-3 and dt < 30, f"max |E[ALG]/OPT - formula| = {worst:.2e} for B=0..10, {dt:.2f}s")


def test_criterion_4_crrr_range(acceptance):
    t0 = time.perf_counter()
    opt = harness.opt_objective(HARD10)
    bad = []
    for B in range(11):
        val, _ = harness.exact_expected_objective(PolicyConfig("crrr"), HARD10, B)
        lo, hi = analysis.crrr_range(BoundQuery(10, B))
        r = val / opt
        if not lo - 1e-3 <= r <= hi + 1e-3:
            bad.append((B, r, lo, hi))
    dt = time.perf_counter() - t0
    acceptance(4, not bad and dt < 30, f"{11 - len(bad)}/11 B values inside the range, {dt:.2f}s {bad or ''}")


def test_criterion_5_mixture(acceptance):
    worst = 0.0
    opt = harness.opt_objective(HARD10)
    for B in range(11):
        val, _ = harness.exact_expected_objective(PolicyConfig("mixture"), HARD10, B)
        worst = max(worst, abs(val / opt - analysis.mixture_perfect(BoundQuery(10, B))))
    x2 = JobInstance((1.0, 1.0 + EPS))
    v2, _ = harness.exact_expected_objective(PolicyConfig("mixture", p=0.25), x2, 1)
    r2 = v2 / harness.opt_objective(x2)
    ok = worst <= 1e-3 and abs(r2 - 1.125) <= 1e-3
    acceptance(5, ok, f"n=10 max |err| {worst:.2e}; n=2,B=1 ratio {r2:.6f}")


def test_criterion_6_quadrature(acceptance):
    t0 = time.perf_counter()
    alpha = analysis.alpha_phi(analysis.ExpPhi())
    target = 2 * (1 - 1 / math.e)
    coeff = 3 - 2 * alpha
    phi = analysis.ExpPhi()
    worst = 0.0
    for x in np.linspace(0.05, 5.0, 10):
        for gap in np.linspace(0.0, 12.0, 10):
            T = x + gap
            worst = max(worst, abs(analysis.g_phi(phi, x, T) - phi.g_closed(x, T)))
    dt = time.perf_counter() - t0
    ok = abs(alpha - target) <= 1e-6 and abs(coeff - (4 / math.e - 1)) <= 1e-6 and worst <= 1e-8 and dt < 5
    acceptance(6, ok, f"alpha err {abs(alpha - target):.1e}, 3-2alpha err {abs(coeff - (4 / math.e - 1)):.1e}, "
                      f"g grid max err {worst:.1e}, {dt:.2f}s")


def test_criterion_7_exponential_monte_carlo(acceptance):
    t0 = time.perf_counter()
    spec = harness.ExperimentSpec(name="acc7", dist=("exp:1",), n=(20,), B=(0, 4, 8, 12, 16, 20),
                                  policies=("switch", "crrr"), trials=10_000, seed=7)
    rows = harness.run_experiment(spec)
    by = {(r.algorithm, r.B): r for r in rows}
    problems = []
    for B in spec.B:
        lower = analysis.lower_bound("exponentialfinite", BoundQuery(20, B))
        for alg in ("switch", "crrr"):
            r = by[(alg, B)]
            if r.ratio < lower - 2 * r.std_err:
                problems.append(f"{alg} B={B} {r.ratio:.4f} < bound {lower:.4f}")
        s, c = by[("switch", B)], by[("crrr", B)]
        if s.ratio > c.ratio + 2 * max(s.std_err, c.std_err):
            problems.append(f"switch above crrr at B={B}: {s.ratio:.4f} vs {c.ratio:.4f}")
    dt = time.perf_counter() - t0
    summary = " ".join(f"B={B}:{by[('switch', B)].ratio:.3f}/{by[('crrr', B)].ratio:.3f}" for B in spec.B)
    acceptance(7, not problems and dt < 300, f"switch/crrr {summary}, {dt:.0f}s {problems or ''}")


def test_criterion_8_preferential_robustness(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(808)
    dists = [parse_distribution(d) for d in ("exp:1", "pareto:1:1.1", "twopoint:1:2:0.5")]
    worst = 0.0
    cfg = parse_policy("preferential", lam=0.5, rho=0.5)
    for k in range(200):
        n = int(rng.integers(2, 41))
        x = sample_instance(dists[k % 3], n, rng)
        B = int(rng.integers(0, n + 1))
        c = float(rng.choice([0.0, 1e-3, 1.0, 50.0, 1e6]))
        view = apply_noise(x, sample_known_subset(n, B, rng), AdversarialConstant(c), rng)
        alg = run(cfg.build(x, view), x, rng, record=False).objective
        worst = max(worst, alg / harness.opt_objective(x))
    dt = time.perf_counter() - t0
    acceptance(8, worst <= 4.0 and dt < 60, f"worst per-trial ALG/OPT {worst:.4f} (limit 4), {dt:.1f}s")


def test_criterion_9_smoothness_bound(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(909)
    violations = []
    margin = math.inf
    for k in range(200):
        B = int(rng.integers(0, 51))
        rho = float(rng.uniform(0.05, 1.0))
        tau = float(rng.choice([0.0, 0.1, 0.5, 1.0, 3.0, 10.0]))
        point = harness.Point("acc9", "pareto:1:1.1", 50, B, PolicyConfig("noisy-switch", rho=rho), "gaussian",
                              tau, trials=300, seed=9000 + k, resample=False)
        row = harness.estimate_ratio(point)
        e = 50 * row.mean_error / row.mean_opt
        bound = analysis.lemma7(BoundQuery(50, B, rho=rho, error=e))
        margin = min(margin, bound + 2 * row.std_err - row.ratio)
        if row.ratio > bound + 2 * row.std_err:
            violations.append((B, rho, tau, row.ratio, bound))
    dt = time.perf_counter() - t0
    acceptance(9, not violations and dt < 180,
               f"{200 - len(violations)}/200 coordinates under the bound, min slack {margin:.4f}, {dt:.0f}s "
               f"{violations[:3] or ''}")


def test_criterion_10_consistency_smoothness(acceptance):
    t0 = time.perf_counter()
    spec = harness.ExperimentSpec(name="acc10", dist=("twopoint:1:2:0.5",), n=(100,), B=(50,),
                                  policies=("noisy-switch",), rho=(0.0, 0.5), noise="uniform",
                                  tau=(0.0, 0.01, 0.15), trials=10_000, seed=10)
    rows = harness.run_experiment(spec)
    r = {(row.rho, row.tau): row for row in rows}

    def se(*rows_):
        return max(x.std_err for x in rows_)

    a0, a5 = r[(0.0, 0.0)], r[(0.5, 0.0)]
    consistent = a0.ratio <= a5.ratio + 2 * se(a0, a5)
    b0, b5 = r[(0.0, 0.15)], r[(0.5, 0.15)]
    gap15 = b5.ratio - b0.ratio
    smooth = gap15 < 0 or abs(gap15) < 2 * se(b0, b5)
    jump0 = r[(0.0, 0.01)].ratio - a0.ratio
    jump5 = r[(0.5, 0.01)].ratio - a5.ratio
    dt = time.perf_counter() - t0
    ok = consistent and smooth and jump0 > jump5 and dt < 600
    acceptance(10, ok, f"tau=0: rho0 {a0.ratio:.4f} vs rho.5 {a5.ratio:.4f}; tau=.15: {b0.ratio:.4f} vs "
                       f"{b5.ratio:.4f}; jump rho0 {jump0:.4f} vs rho.5 {jump5:.4f}; {dt:.0f}s")
