import math
from collections import Counter

import numpy as np
import pytest

from limsched import harness
from limsched.engine import run
from limsched.instances import JobInstance, ParameterError, PredictionView
from limsched.policies import (BreakpointSet, ConfigurationError, CrrrPolicy, MixturePolicy,
                               NoisySwitchPolicy, OptPolicy, PolicyConfig, PreferentialPolicy,
                               RoundRobinPolicy, RtcPolicy, SpjfPolicy, SwitchPolicy, make_baseline,
                               make_crrr, make_mixture, make_noisy_switch, make_preferential, make_switch,
                               parse_policy, rtc_switch_probability)


def rng(seed=0):
    return np.random.default_rng(seed)


def view(x, known, preds=None):
    x = JobInstance(tuple(x))
    if preds is None:
        return PredictionView.perfect(x, known)
    return PredictionView(tuple(known), tuple(preds), x.n)


class TestBaselines:
    def test_opt(self):
        tr = run(make_baseline("opt", sizes=[3.0, 1.0, 2.0]), [3.0, 1.0, 2.0])
        assert tr.completion == [6.0, 1.0, 3.0] and tr.objective == 10.0

    def test_opt_ties_by_index(self):
        tr = run(OptPolicy([2.0, 2.0]), [2.0, 2.0])
        assert tr.completion == [2.0, 4.0]

    def test_opt_needs_sizes(self):
        with pytest.raises(ConfigurationError):
            make_baseline("opt")

    def test_rr(self):
        assert run(make_baseline("rr"), [1.0, 2.0]).objective == 5.0

    def test_rtc_forced_order(self):
        tr = run(RtcPolicy(order=(1, 0)), [1.0, 2.0])
        assert tr.completion == [3.0, 2.0] and tr.objective == 5.0

    def test_rtc_both_orders_occur(self):
        seen = Counter(tuple(run(RtcPolicy(), [1.0, 2.0], rng(s)).completion) for s in range(200))
        assert set(seen) == {(1.0, 3.0), (3.0, 2.0)}

    def test_spjf(self):
        v = view([3.0, 1.0, 2.0], [0, 1, 2], [3.0, 1.0, 2.0])
        assert run(SpjfPolicy(v), [3.0, 1.0, 2.0], rng()).objective == 10.0
        with pytest.raises(ConfigurationError):
            SpjfPolicy(view([1.0, 2.0], [0]))

    def test_spjf_ties_random(self):
        v = view([1.0, 2.0], [0, 1], [1.0, 1.0])
        seen = {tuple(run(SpjfPolicy(v), [1.0, 2.0], rng(s)).completion) for s in range(100)}
        assert len(seen) == 2


class TestCrrr:
    def test_two_jobs(self):
        tr = run(make_crrr(view([1.0, 2.0], [0])), [1.0, 2.0])
        assert tr.completion == [2.0, 3.0]

    def test_full_information_is_sjf(self):
        tr = run(make_crrr(view([1.0, 2.0, 3.0], [0, 1, 2])), [1.0, 2.0, 3.0])
        assert tr.objective == 10.0

    def test_no_known_is_round_robin(self):
        x = list(rng(1).exponential(1.0, 7))
        a = run(make_crrr(PredictionView.empty(7)), x)
        b = run(RoundRobinPolicy(), x)
        assert a.completion == b.completion

    def test_phase_invariant(self):
        g = rng(2)
        for _ in range(50):
            n = int(g.integers(2, 12))
            x = JobInstance(tuple(g.exponential(1.0, n).tolist()))
            known = g.permutation(n)[: int(g.integers(1, n + 1))].tolist()
            v = PredictionView.perfect(x, known)
            pol = CrrrPolicy(v)
            tr = run(pol, x)
            unknown = [j for j in range(n) if j not in known]
            order = pol.order
            # phase i starts at the completion of pi(i-1): unknown survivors sit at x_{pi(i-1)}
            for prev in order[:-1]:
                t_prev = tr.completion[prev]
                ev = next(e for e in tr.events if e.time == t_prev)
                for j in unknown:
                    if tr.completion[j] > t_prev:
                        assert math.isclose(ev.processed[j], x[prev], rel_tol=1e-9)


class TestSwitch:
    def test_examples(self):
        assert run(make_switch(view([1.0, 2.0], [0])), [1.0, 2.0], rng()).completion == [2.0, 3.0]
        assert run(make_switch(view([1.0, 2.0], [1])), [1.0, 2.0], rng()).completion == [1.0, 3.0]

    def test_zero_breakpoint_runs_first(self):
        v = view([1.0, 2.0, 3.0], [2], [0.0])
        tr = run(make_switch(v), [1.0, 2.0, 3.0], rng())
        assert tr.completion[2] == 3.0

    def test_skip_when_already_past(self):
        v = view([5.0, 5.0, 5.0], [0, 1], [1.0, 1.0])
        tr = run(make_switch(v), [5.0, 5.0, 5.0], rng())
        assert sorted(tr.completion[:2]) == [6.0, 11.0]

    def test_breakpoint_set_validation(self):
        with pytest.raises(ParameterError):
            BreakpointSet({0: -1.0})
        with pytest.raises(ParameterError):
            BreakpointSet({0: 2.0, 1: 1.0}, order=(0, 1))
        bp = BreakpointSet({0: 1.0, 1: 1.0, 2: 0.5}).with_order(rng(3))
        assert bp.order[0] == 2
        assert bp.consistent_with(PredictionView((0, 1, 2), (1.0, 1.0, 0.5), 3))
        with pytest.raises(ConfigurationError):
            SwitchPolicy(view([1.0, 2.0], [0]), BreakpointSet({1: 1.0}))

    def test_ties_uniform(self):
        z = {0: 1.0, 1: 1.0, 2: 1.0}
        counts = Counter(BreakpointSet(z).with_order(rng(s)).order for s in range(6000))
        assert len(counts) == 6
        assert all(abs(c / 6000 - 1 / 6) <= 4 * math.sqrt((1 / 6) * (5 / 6) / 6000) for c in counts.values())

    def test_hard_instance_two_jobs(self):
        eps = 1e-6
        val, count = harness.exact_expected_objective(PolicyConfig("switch"), [1 + eps, 1 + 2 * eps], 1)
        ratio = val / harness.opt_objective(JobInstance((1 + eps, 1 + 2 * eps)))
        assert count == 2 and abs(ratio - 7 / 6) <= 1e-3

    def test_known_job_not_preempted(self):
        g = rng(4)
        for _ in range(50):
            n = int(g.integers(2, 10))
            x = JobInstance(tuple(g.exponential(1.0, n).tolist()))
            known = g.permutation(n)[: int(g.integers(1, n + 1))].tolist()
            tr = run(make_switch(PredictionView.perfect(x, known)), x, g)
            for k in known:
                idx = [i for i, e in enumerate(tr.events) if e.rates.get(k, 0) > 0]
                assert all(tr.events[i].rates == {k: 1.0} for i in idx)
                # one contiguous stretch of events, ending with k's completion
                assert idx == list(range(idx[0], idx[-1] + 1))
                assert tr.events[idx[-1]].time == tr.completion[k]


class TestNoisySwitch:
    def test_rho_zero_matches_switch(self):
        x = list(rng(5).exponential(1.0, 8))
        v = view(x, [0, 3, 5])
        a = run(make_noisy_switch(v, 0.0), x, rng(9))
        b = run(make_switch(v), x, rng(9))
        assert a.completion == b.completion and a.events == b.events

    def test_xi_mean(self):
        g = rng(10)
        v = view([1.0], [0])
        xs = []
        for _ in range(100_000):
            p = NoisySwitchPolicy(v, 0.5)
            p.start(1, g)
            xs.append(p.xi)
        xs = np.array(xs)
        assert xs.min() >= 1.0
        assert abs(xs.mean() - 1.5) <= 3 * xs.std() / math.sqrt(xs.size)

    def test_rho_range(self):
        with pytest.raises(ParameterError):
            make_noisy_switch(view([1.0], [0]), 1.5)


class TestPreferential:
    def _setup(self, seed=11, n=9, B=4):
        g = rng(seed)
        x = list(g.exponential(1.0, n) + 0.1)
        v = view(x, g.permutation(n)[:B].tolist(), list(g.exponential(1.0, B)))
        return x, v

    def test_lambda_one_is_inner(self):
        x, v = self._setup()
        a = run(make_preferential(1.0, make_noisy_switch(v, 0.4)), x, rng(3))
        b = run(make_noisy_switch(v, 0.4), x, rng(3))
        assert a.completion == b.completion
        assert [e.time for e in a.events] == [e.time for e in b.events]

    def test_lambda_zero_is_round_robin(self):
        x, v = self._setup(12)
        a = run(make_preferential(0.0, make_switch(v)), x, rng(3))
        b = run(RoundRobinPolicy(), x)
        assert a.completion == b.completion

    def test_robust_to_garbage(self):
        g = rng(13)
        for _ in range(100):
            n = int(g.integers(2, 15))
            x = JobInstance(tuple((g.pareto(1.1, n) + 1).tolist()))
            B = int(g.integers(0, n + 1))
            v = PredictionView(tuple(g.permutation(n)[:B].tolist()), tuple(g.uniform(0, 1e3, B).tolist()), n)
            tr = run(make_preferential(0.5, make_noisy_switch(v, 0.5)), x, g, record=False)
            assert tr.objective / harness.opt_objective(x) <= 4.0

    def test_virtual_toggle_changes_view(self):
        x, v = self._setup(14, n=6, B=3)
        a = run(make_preferential(0.5, make_switch(v), virtual=True), x, rng(1))
        b = run(make_preferential(0.5, make_switch(v), virtual=False), x, rng(1))
        assert a.complete and b.complete

    def test_inner_must_use_predictions(self):
        with pytest.raises(ConfigurationError):
            PreferentialPolicy(0.5, RoundRobinPolicy())
        with pytest.raises(ParameterError):
            make_preferential(1.5, make_switch(view([1.0], [0])))


class TestMixture:
    def test_endpoints(self):
        x = [1.0, 2.0, 3.0]
        a, b = OptPolicy(x), RoundRobinPolicy()
        assert run(make_mixture(1.0, a, b), x, rng()).objective == 10.0
        assert run(make_mixture(0.0, OptPolicy(x), RoundRobinPolicy()), x, rng()).objective == 14.0

    def test_probability(self):
        assert rtc_switch_probability(2, 1) == 0.25
        assert rtc_switch_probability(5, 5) == 0.0
        with pytest.raises(ParameterError):
            MixturePolicy(2.0, RoundRobinPolicy(), RoundRobinPolicy())

    def test_exact_small(self):
        val, _ = harness.exact_expected_objective(PolicyConfig("mixture", p=0.25), [1.0, 1.0 + 1e-6], 1)
        assert abs(val / harness.opt_objective(JobInstance((1.0, 1.0 + 1e-6))) - 1.125) <= 1e-3


class TestConfig:
    def test_parse_and_labels(self):
        c = parse_policy("preferential", lam=0.5, rho=0.2)
        assert c.kind == "preferential" and c.inner.rho == 0.2 and c.label == "preferential[noisy-switch]"
        assert parse_policy("mixture").label == "mixture[rtc|switch]"
        assert PolicyConfig("round-robin").kind == "rr"
        with pytest.raises(ConfigurationError):
            PolicyConfig("srpt")
        with pytest.raises(ConfigurationError):
            PolicyConfig("preferential", lam=0.5, inner=PolicyConfig("rr"))
        with pytest.raises(ParameterError):
            PolicyConfig("preferential", lam=1.5)

    def test_uses_predictions(self):
        assert not PolicyConfig("rr").uses_predictions
        assert PolicyConfig("crrr").uses_predictions
        assert PolicyConfig("mixture").uses_predictions

    def test_build_every_kind(self):
        x = JobInstance((1.0, 2.0, 3.0))
        v = PredictionView.perfect(x, (0, 1, 2))
        for name in ("opt", "rr", "rtc", "spjf", "crrr", "switch", "noisy-switch", "preferential", "mixture"):
            tr = run(parse_policy(name, lam=0.5, rho=0.3).build(x, v), x, rng())
            assert tr.complete
