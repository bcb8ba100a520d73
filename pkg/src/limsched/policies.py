"""Scheduling policies expressed against the engine's decision contract.

Non-clairvoyant policies only ever see processed amounts and the set of
unfinished jobs; the true sizes are handed to ``Opt`` alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .engine import Observation, Policy, PolicyDecision, tol
from .instances import JobInstance, ParameterError, PredictionView


class ConfigurationError(ValueError):
    pass


def round_robin(jobs) -> dict[int, float]:
    k = len(jobs)
    if k == 0:
        return {}
    share = 1.0 / k
    return {j: share for j in jobs}


def _rng(rng):
    return rng if rng is not None else np.random.default_rng()


def _shuffled_order(keys: Mapping[int, float], rng) -> tuple[int, ...]:
    """Sort jobs by key; equal keys end up in uniformly random relative order."""
    jobs = sorted(keys)
    if not jobs:
        return ()
    tiebreak = _rng(rng).permutation(len(jobs))
    rank = dict(zip(jobs, tiebreak.tolist()))
    return tuple(sorted(jobs, key=lambda j: (keys[j], rank[j])))


# ---------------------------------------------------------------------------
# baselines


class SequentialPolicy(Policy):
    """Runs jobs one at a time, to completion, in ``self.order``."""

    order: Sequence[int] = ()

    def start(self, n, rng):
        super().start(n, rng)
        self._pos = 0

    def decide(self, obs):
        order = self.order
        while order[self._pos] not in obs.unfinished:
            self._pos += 1
        return PolicyDecision({order[self._pos]: 1.0})


class OptPolicy(SequentialPolicy):
    """Clairvoyant shortest-job-first; ties by index."""

    def __init__(self, sizes: Sequence[float]):
        self.sizes = tuple(float(s) for s in sizes)
        self.order = tuple(sorted(range(len(self.sizes)), key=lambda j: (self.sizes[j], j)))


class RoundRobinPolicy(Policy):
    def decide(self, obs):
        return PolicyDecision(round_robin(obs.unfinished))


class RtcPolicy(SequentialPolicy):
    """Run to completion in a uniformly random order."""

    def __init__(self, order: Sequence[int] | None = None):
        self.fixed = tuple(order) if order is not None else None

    def start(self, n, rng):
        super().start(n, rng)
        self.order = self.fixed if self.fixed is not None else tuple(_rng(rng).permutation(n).tolist())


class SpjfPolicy(SequentialPolicy):
    """Shortest predicted job first; needs a prediction for every job."""

    def __init__(self, view: PredictionView):
        if view.B != view.n:
            raise ConfigurationError(f"SPJF needs predictions for all {view.n} jobs, got {view.B}")
        self.view = view

    def start(self, n, rng):
        super().start(n, rng)
        self.order = _shuffled_order(self.view.as_dict(), rng)


def make_baseline(kind: str, *, sizes=None, view: PredictionView | None = None) -> Policy:
    kind = kind.lower()
    if kind == "opt":
        if sizes is None:
            raise ConfigurationError("Opt is the clairvoyant reference and needs the true sizes")
        return OptPolicy(sizes.sizes if isinstance(sizes, JobInstance) else sizes)
    if kind in ("rr", "roundrobin", "round-robin"):
        return RoundRobinPolicy()
    if kind == "rtc":
        return RtcPolicy()
    if kind == "spjf":
        if view is None:
            raise ConfigurationError("SPJF needs a prediction view")
        return SpjfPolicy(view)
    raise ConfigurationError(f"unknown baseline {kind!r}")


# ---------------------------------------------------------------------------
# CRRR


class CrrrPolicy(Policy):
    """Catch-up and resume round-robin over a known order of the known jobs.

    The predictions are trusted as exact sizes.
    """

    def __init__(self, view: PredictionView):
        self.view = view
        y = view.as_dict()
        self.order = tuple(sorted(y, key=lambda j: (y[j], j)))
        self.size = y

    def start(self, n, rng):
        super().start(n, rng)
        known = set(self.order)
        self.unknown = [j for j in range(n) if j not in known]
        self._i = 0
        self._caught_up = False

    def decide(self, obs):
        S = obs.processed
        live = obs.unfinished
        order = self.order
        while self._i < len(order):
            k = order[self._i]
            if k not in live:
                self._i += 1
                self._caught_up = False
                continue
            if not self._caught_up:
                target = self.size[order[self._i - 1]] if self._i > 0 else 0.0
                if S[k] < target - tol(target):
                    return PolicyDecision({k: 1.0}, ((k, target),))
                self._caught_up = True
            group = [j for j in self.unknown if j in live]
            group.append(k)
            return PolicyDecision(round_robin(group))
        return PolicyDecision(round_robin([j for j in self.unknown if j in live]))


def make_crrr(view: PredictionView) -> CrrrPolicy:
    return CrrrPolicy(view)


# ---------------------------------------------------------------------------
# Switch


@dataclass(frozen=True)
class BreakpointSet:
    """Thresholds ``z`` on the known jobs plus the order the known jobs run in.

    ``order`` may be left out; it is then drawn when the run starts, with ties
    among equal thresholds shuffled uniformly.
    """

    z: Mapping[int, float]
    order: tuple[int, ...] | None = None

    def __post_init__(self):
        z = {int(j): float(v) for j, v in dict(self.z).items()}
        if any(not v >= 0 for v in z.values()):
            raise ParameterError("breakpoints must be >= 0")
        object.__setattr__(self, "z", z)
        if self.order is not None:
            order = tuple(int(j) for j in self.order)
            if sorted(order) != sorted(z):
                raise ParameterError("order must be a permutation of the breakpoint jobs")
            if any(z[a] > z[b] for a, b in zip(order, order[1:])):
                raise ParameterError("order is not sorted by breakpoint")
            object.__setattr__(self, "order", order)

    @classmethod
    def from_view(cls, view: PredictionView, scale: float = 1.0, order=None) -> "BreakpointSet":
        return cls({j: scale * y for j, y in zip(view.known, view.predictions)}, order)

    def with_order(self, rng) -> "BreakpointSet":
        if self.order is not None:
            return self
        return BreakpointSet(self.z, _shuffled_order(self.z, rng))

    def consistent_with(self, view: PredictionView) -> bool:
        y = view.as_dict()
        if set(y) != set(self.z):
            return False
        jobs = list(y)
        return all((self.z[a] < self.z[b]) == (y[a] < y[b]) for a in jobs for b in jobs)


class SwitchPolicy(Policy):
    """Alternate round-robin on the unknown jobs with running known jobs to completion.

    Phase i: round-robin on the unfinished unknown jobs until their common
    processed amount reaches ``z[pi(i)]`` (or they are all done), then run
    ``pi(i)`` alone until it completes.
    """

    def __init__(self, view: PredictionView, breakpoints: BreakpointSet):
        if set(breakpoints.z) != set(view.known):
            raise ConfigurationError("breakpoints must cover exactly the known jobs")
        self.view = view
        self.breakpoints = breakpoints

    def start(self, n, rng):
        super().start(n, rng)
        bp = self.breakpoints.with_order(rng)
        self.order = bp.order
        self.z = bp.z
        known = set(self.order)
        self.unknown = [j for j in range(n) if j not in known]
        self._i = 0
        self._solo = False

    def decide(self, obs):
        S = obs.processed
        live = obs.unfinished
        order = self.order
        while self._i < len(order):
            k = order[self._i]
            if k not in live:
                self._i += 1
                self._solo = False
                continue
            if not self._solo:
                group = [j for j in self.unknown if j in live]
                if group:
                    lead = max(group, key=S.__getitem__)
                    z = self.z[k]
                    if S[lead] < z - tol(z):
                        return PolicyDecision(round_robin(group), ((lead, z),))
                self._solo = True
            return PolicyDecision({k: 1.0})
        return PolicyDecision(round_robin([j for j in self.unknown if j in live]))


def make_switch(view: PredictionView, breakpoints: BreakpointSet | None = None) -> SwitchPolicy:
    """Switch with the given breakpoints (default: the predictions themselves)."""
    if breakpoints is None:
        breakpoints = BreakpointSet.from_view(view)
    return SwitchPolicy(view, breakpoints)


class NoisySwitchPolicy(Policy):
    """Switch with breakpoints ``xi * y``, ``xi = 1 + Exp(mean rho)`` drawn once per run."""

    def __init__(self, view: PredictionView, rho: float, rng=None):
        if not 0.0 <= rho <= 1.0:
            raise ParameterError(f"rho must be in [0, 1], got {rho}")
        self.view = view
        self.rho = float(rho)
        self.rng = rng
        self.xi = None

    def start(self, n, rng):
        super().start(n, rng)
        rng = self.rng if self.rng is not None else rng
        self.xi = 1.0 + _rng(rng).exponential(self.rho) if self.rho > 0 else 1.0
        self.inner = SwitchPolicy(self.view, BreakpointSet.from_view(self.view, self.xi))
        self.inner.start(n, rng)

    def decide(self, obs):
        return self.inner.decide(obs)


def make_noisy_switch(view: PredictionView, rho: float, rng=None) -> NoisySwitchPolicy:
    return NoisySwitchPolicy(view, rho, rng)


# ---------------------------------------------------------------------------
# compositions


class PreferentialPolicy(Policy):
    """Run ``inner`` at machine rate ``lam`` and round-robin at rate ``1 - lam``.

    With ``virtual=True`` the inner policy sees only the processing it did
    itself (a machine of speed ``lam``); with ``virtual=False`` it sees the
    total processed amounts.
    """

    def __init__(self, lam: float, inner: Policy, rng=None, virtual: bool = True):
        if not 0.0 <= lam <= 1.0:
            raise ParameterError(f"lambda must be in [0, 1], got {lam}")
        if not isinstance(inner, (SwitchPolicy, NoisySwitchPolicy)):
            raise ConfigurationError("the preferential inner policy must be Switch or noisy Switch")
        self.lam = float(lam)
        self.inner = inner
        self.rng = rng
        self.virtual = virtual

    def start(self, n, rng):
        super().start(n, rng)
        self.inner.start(n, self.rng if self.rng is not None else rng)
        self.V = [0.0] * n
        self._a = {}
        self._map = {}

    def decide(self, obs):
        lam = self.lam
        V = self.V
        if obs.elapsed:
            for j, r in self._a.items():
                V[j] += lam * r * obs.elapsed
        inner_fired = []
        for j, theta in obs.fired:
            theta_v = self._map.get((j, theta))
            if theta_v is not None:
                V[j] = theta_v
                inner_fired.append((j, theta_v))
        seen = V if self.virtual else obs.processed
        inner_dec = self.inner.decide(Observation(
            obs.now, obs.elapsed, seen, obs.unfinished, obs.completed,
            tuple(inner_fired) if self.virtual else obs.fired))
        a = inner_dec.rates
        self._a = a

        rr_share = (1.0 - lam) / len(obs.unfinished)
        rates = {}
        for j in obs.unfinished:
            r = lam * a.get(j, 0.0) + rr_share
            if r > 0:
                rates[j] = r

        S = obs.processed
        triggers = []
        self._map = {}
        for j, theta_v in inner_dec.triggers:
            va = lam * a.get(j, 0.0)
            if va <= 0:
                continue
            if not self.virtual:
                triggers.append((j, theta_v))
                self._map[(j, theta_v)] = theta_v
                continue
            ratio = rates[j] / va
            if ratio == 1.0:
                theta_s = theta_v + (S[j] - V[j])
            else:
                theta_s = S[j] + (theta_v - V[j]) * ratio
            triggers.append((j, theta_s))
            self._map[(j, theta_s)] = theta_v
        return PolicyDecision(rates, tuple(triggers))


def make_preferential(lam: float, inner: Policy, rng=None, virtual: bool = True) -> PreferentialPolicy:
    return PreferentialPolicy(lam, inner, rng, virtual)


class MixturePolicy(Policy):
    """One biased coin per run: behave as ``a`` with probability ``p``, else as ``b``."""

    def __init__(self, p: float, a: Policy, b: Policy, rng=None):
        if not 0.0 <= p <= 1.0:
            raise ParameterError(f"p must be in [0, 1], got {p}")
        self.p = float(p)
        self.a = a
        self.b = b
        self.rng = rng

    def start(self, n, rng):
        super().start(n, rng)
        rng = self.rng if self.rng is not None else rng
        self.chose_a = bool(_rng(rng).random() < self.p)
        self.active = self.a if self.chose_a else self.b
        self.active.start(n, rng)

    def decide(self, obs):
        return self.active.decide(obs)


def make_mixture(p: float, a: Policy, b: Policy, rng=None) -> MixturePolicy:
    return MixturePolicy(p, a, b, rng)


def rtc_switch_probability(n: int, B: int) -> float:
    """Probability of running RTC in the RTC/Switch mixture that is optimal for perfect predictions."""
    return 2.0 * (n - B) / (n * (n + 3) - 2 * B)


# ---------------------------------------------------------------------------
# declarative configs

KINDS = ("opt", "rr", "rtc", "spjf", "crrr", "switch", "noisy-switch", "preferential", "mixture")
PREDICTION_KINDS = ("switch", "noisy-switch")


@dataclass(frozen=True)
class PolicyConfig:
    """Declarative policy description; ``build`` instantiates it for one run.

    ``inner`` is the preferential inner config; ``a``/``b`` are the mixture
    branches. ``p=None`` on a mixture means the RTC/Switch probability for the
    run's (n, B).
    """

    kind: str
    lam: float | None = None
    rho: float | None = None
    p: float | None = None
    inner: "PolicyConfig | None" = None
    a: "PolicyConfig | None" = None
    b: "PolicyConfig | None" = None
    virtual: bool = True

    def __post_init__(self):
        kind = self.kind.lower()
        kind = {"round-robin": "rr", "roundrobin": "rr", "noisy_switch": "noisy-switch",
                "noisyswitch": "noisy-switch", "pa": "preferential"}.get(kind, kind)
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ConfigurationError(f"unknown policy kind {self.kind!r}")
        if kind == "noisy-switch":
            if self.rho is None:
                object.__setattr__(self, "rho", 0.0)
            if not 0.0 <= self.rho <= 1.0:
                raise ParameterError("rho must be in [0, 1]")
        if kind == "preferential":
            if self.lam is None or not 0.0 <= self.lam <= 1.0:
                raise ParameterError("preferential needs lambda in [0, 1]")
            if self.inner is None:
                object.__setattr__(self, "inner", PolicyConfig("noisy-switch", rho=self.rho or 0.0))
            if self.inner.kind not in PREDICTION_KINDS:
                raise ConfigurationError("preferential inner must be switch or noisy-switch")
        if kind == "mixture":
            if self.p is not None and not 0.0 <= self.p <= 1.0:
                raise ParameterError("p must be in [0, 1]")
            if self.a is None:
                object.__setattr__(self, "a", PolicyConfig("rtc"))
            if self.b is None:
                object.__setattr__(self, "b", PolicyConfig("switch"))

    @property
    def uses_predictions(self) -> bool:
        if self.kind in ("spjf", "crrr", "switch", "noisy-switch"):
            return True
        if self.kind == "preferential":
            return True
        if self.kind == "mixture":
            return self.a.uses_predictions or self.b.uses_predictions
        return False

    @property
    def label(self) -> str:
        if self.kind == "preferential":
            return f"preferential[{self.inner.label}]"
        if self.kind == "mixture":
            return f"mixture[{self.a.label}|{self.b.label}]"
        return self.kind

    def resolved_p(self, n: int, B: int) -> float:
        return self.p if self.p is not None else rtc_switch_probability(n, B)

    def build(self, x: JobInstance, view: PredictionView) -> Policy:
        kind = self.kind
        if kind == "opt":
            return OptPolicy(x.sizes)
        if kind == "rr":
            return RoundRobinPolicy()
        if kind == "rtc":
            return RtcPolicy()
        if kind == "spjf":
            return SpjfPolicy(view)
        if kind == "crrr":
            return CrrrPolicy(view)
        if kind == "switch":
            return make_switch(view)
        if kind == "noisy-switch":
            return NoisySwitchPolicy(view, self.rho)
        if kind == "preferential":
            return PreferentialPolicy(self.lam, self.inner.build(x, view), virtual=self.virtual)
        if kind == "mixture":
            return MixturePolicy(self.resolved_p(x.n, view.B), self.a.build(x, view), self.b.build(x, view))
        raise ConfigurationError(kind)


def parse_policy(name: str, *, lam=None, rho=None, p=None, virtual=True) -> PolicyConfig:
    """Build a config from a CLI name (``opt|rr|rtc|spjf|crrr|switch|noisy-switch|preferential|mixture``)."""
    name = name.lower()
    if name in ("preferential", "pa"):
        return PolicyConfig("preferential", lam=lam if lam is not None else 0.5,
                            inner=PolicyConfig("noisy-switch", rho=rho if rho is not None else 0.0),
                            virtual=virtual)
    if name == "mixture":
        return PolicyConfig("mixture", p=p)
    if name in ("noisy-switch", "noisy_switch"):
        return PolicyConfig("noisy-switch", rho=rho if rho is not None else 0.0)
    return PolicyConfig(name)
