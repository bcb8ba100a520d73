"""Exact event-driven execution of rate-based preemptive policies on one machine.

Between two events every job runs at a constant rate, so the engine jumps
straight to the next completion or trigger; there is no time step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .instances import JobInstance

RATE_SLACK = 1e-12
REL_TOL = 1e-9
ABS_TOL = 1e-12


def tol(v: float) -> float:
    return max(REL_TOL * abs(v), ABS_TOL)


class EngineError(RuntimeError):
    pass


class DeadlockError(EngineError):
    """All rates are zero while some job is unfinished."""


class ContractViolation(EngineError):
    """A policy returned an infeasible decision."""


class StateError(EngineError):
    pass


@dataclass(frozen=True)
class PolicyDecision:
    rates: Mapping[int, float]
    triggers: tuple[tuple[int, float], ...] = ()


@dataclass
class Observation:
    """Everything a non-clairvoyant policy may look at when re-deciding.

    ``processed`` and ``unfinished`` are the engine's live containers; policies
    must treat them as read-only.
    """

    now: float
    elapsed: float
    processed: Sequence[float]
    unfinished: set
    completed: tuple[int, ...] = ()
    fired: tuple[tuple[int, float], ...] = ()


class Policy:
    """Base class: ``start`` once per run, then ``decide`` at every event."""

    def start(self, n: int, rng: np.random.Generator | None) -> None:
        self.n = n

    def decide(self, obs: Observation) -> PolicyDecision:
        raise NotImplementedError


@dataclass(frozen=True)
class Event:
    time: float
    causes: tuple[tuple[str, int, float], ...]
    # rates in force over the interval that ends at ``time``
    rates: Mapping[int, float]
    processed: tuple[float, ...] | None = None


@dataclass
class ExecutionTrace:
    sizes: tuple[float, ...]
    completion: list[float]
    events: list[Event] = field(default_factory=list)
    triggers_issued: int = 0
    recorded: bool = True

    @property
    def n(self):
        return len(self.sizes)

    @property
    def objective(self) -> float:
        return math.fsum(self.completion)

    @property
    def complete(self) -> bool:
        return all(math.isfinite(t) for t in self.completion)

    def write_csv(self, path_or_file):
        """Event log as CSV with columns time,cause,job,rate_vector."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh)
            w.writerow(["time", "cause", "job", "rate_vector"])
            for ev in self.events:
                vec = " ".join(f"{j}:{r:.12g}" for j, r in sorted(ev.rates.items()))
                for kind, j, theta in ev.causes:
                    cause = kind if kind == "completion" else f"trigger@{theta:.12g}"
                    w.writerow([repr(ev.time), cause, j, vec])
        finally:
            if own:
                fh.close()


def _check_decision(dec: PolicyDecision, S, unfinished) -> float:
    total = 0.0
    progress = False
    for j, r in dec.rates.items():
        if j not in unfinished:
            raise ContractViolation(f"rate assigned to finished or unknown job {j}")
        if not r >= 0:
            raise ContractViolation(f"negative or NaN rate {r} for job {j}")
        if r > 0:
            progress = True
        total += r
    if total > 1.0 + RATE_SLACK:
        raise ContractViolation(f"rates sum to {total!r} > 1")
    for j, theta in dec.triggers:
        if j not in unfinished:
            raise ContractViolation(f"trigger on finished job {j}")
        if not theta > S[j]:
            raise ContractViolation(f"stale trigger ({j}, {theta!r}) with processed {S[j]!r}")
    if not progress:
        raise DeadlockError("no unfinished job has a positive rate")
    return total


def run(policy: Policy, x: JobInstance | Sequence[float], rng: np.random.Generator | None = None,
        *, record: bool = True) -> ExecutionTrace:
    """Execute ``policy`` on the sizes in ``x`` until every job completes.

    With ``record=False`` no event log is kept, which is what the Monte Carlo
    harness uses.
    """
    sizes = tuple(x.sizes) if isinstance(x, JobInstance) else tuple(float(s) for s in x)
    n = len(sizes)
    S = [0.0] * n
    done_at = [tol(s) for s in sizes]
    unfinished = set(range(n))
    completion = [math.inf] * n
    events: list[Event] = []
    now = 0.0
    elapsed = 0.0
    completed: tuple[int, ...] = ()
    fired: tuple[tuple[int, float], ...] = ()
    issued = set()
    n_events = 0
    policy.start(n, rng)

    while unfinished:
        dec = policy.decide(Observation(now, elapsed, S, unfinished, completed, fired))
        _check_decision(dec, S, unfinished)
        rates = dec.rates
        triggers = dec.triggers
        if triggers:
            issued.update(triggers)

        dt = math.inf
        for j, r in rates.items():
            if r > 0:
                d = (sizes[j] - S[j]) / r
                if d < dt:
                    dt = d
        for j, theta in triggers:
            r = rates.get(j, 0.0)
            if r > 0:
                d = (theta - S[j]) / r
                if d < dt:
                    dt = d
        if not dt > 0:
            raise EngineError(f"non-positive step {dt!r} at t={now!r}")

        now += dt
        for j, r in rates.items():
            if r > 0:
                S[j] += r * dt

        comp = []
        for j, r in rates.items():
            if r > 0 and S[j] >= sizes[j] - done_at[j]:
                comp.append(j)
        comp.sort()
        for j in comp:
            S[j] = sizes[j]
            completion[j] = now
            unfinished.discard(j)
        fire = []
        for j, theta in triggers:
            if j in unfinished and rates.get(j, 0.0) > 0 and S[j] >= theta - tol(theta):
                S[j] = theta
                fire.append((j, theta))
        fire.sort()
        if not comp and not fire:
            raise EngineError(f"step to t={now!r} produced no event")
        completed = tuple(comp)
        fired = tuple(fire)
        elapsed = dt
        if record:
            causes = tuple(("completion", j, math.nan) for j in comp) + \
                tuple(("trigger", j, th) for j, th in fire)
            events.append(Event(now, causes, rates, tuple(S)))
        n_events += 1
        if n_events > 4 * (n + len(issued)) + 16:
            raise EngineError("event budget exceeded; policy keeps re-issuing triggers")

    return ExecutionTrace(sizes, completion, events, len(issued), record)


def delays_from_trace(trace: ExecutionTrace, x: JobInstance | Sequence[float] | None = None):
    """Directed delays ``D[i, j] = S_i(t_j)`` and mutual delays ``P = D + D.T``.

    The diagonals are zero.
    """
    if not trace.complete:
        raise StateError("trace is incomplete")
    if not trace.recorded:
        raise StateError("trace was run with record=False; no event log to read")
    sizes = trace.sizes if x is None else (x.sizes if isinstance(x, JobInstance) else tuple(x))
    if len(sizes) != trace.n:
        raise StateError("instance does not match trace")
    n = trace.n
    D = np.zeros((n, n))
    for ev in trace.events:
        snap = np.asarray(ev.processed)
        for kind, j, _ in ev.causes:
            if kind == "completion":
                D[:, j] = snap
    np.fill_diagonal(D, 0.0)
    P = D + D.T
    return P, D


def mutual_delay_sum(P: np.ndarray) -> float:
    iu = np.triu_indices(P.shape[0], 1)
    return math.fsum(P[iu].tolist())


def processed_at(trace: ExecutionTrace) -> Iterable[tuple[float, tuple[float, ...], Mapping[int, float]]]:
    """Yield ``(time, processed amounts after the event, rates that led to it)``."""
    for ev in trace.events:
        yield ev.time, ev.processed, ev.rates
