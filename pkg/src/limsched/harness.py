"""Monte Carlo and exact estimation of competitive ratios, experiment presets, CSV and SVG output."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import analysis
from .engine import EngineError, run
from .instances import (AdversarialConstant, JobInstance, NoNoise, ParameterError, PredictionView,
                        apply_noise, parse_distribution, parse_noise, prediction_error,
                        sample_instance, sample_known_subset, with_tau)
from .policies import (BreakpointSet, ConfigurationError, CrrrPolicy, MixturePolicy, OptPolicy,
                       PolicyConfig, PreferentialPolicy, RtcPolicy, SwitchPolicy, parse_policy)

log = logging.getLogger(__name__)

CSV_HEADER = ("experiment", "algorithm", "n", "B", "lambda", "rho", "p", "tau", "trials", "estimator",
              "mean_alg", "mean_opt", "ratio", "std_err", "exact", "seed")
ESTIMATORS = ("rom", "mor")
DEFAULT_CAP = 100_000


class TrialError(EngineError):
    """An engine failure inside one Monte Carlo trial, tagged with what is needed to replay it."""

    def __init__(self, message, *, seed, trial, coordinate):
        super().__init__(f"{message} (seed={seed}, trial={trial}, coordinate={coordinate})")
        self.seed = seed
        self.trial = trial
        self.coordinate = coordinate


class EnumerationCapExceeded(ValueError):
    def __init__(self, required, cap):
        super().__init__(f"exact enumeration needs {required} outcomes, cap is {cap}")
        self.required = required
        self.cap = cap


class UnsupportedPolicyError(ValueError):
    pass


def _normalize_estimator(name: str) -> str:
    key = name.lower().replace("_", "-")
    key = {"ratio-of-means": "rom", "mean-of-ratios": "mor"}.get(key, key)
    if key not in ESTIMATORS:
        raise ParameterError(f"unknown estimator {name!r}")
    return key


# ---------------------------------------------------------------------------
# random streams


def _key(text: str) -> int:
    return zlib.crc32(text.encode())


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``key`` under master ``seed``; the same key always gives the same stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(key))))


_INSTANCE, _SUBSET, _NOISE, _POLICY = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# spec, points and rows


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative experiment grid.

    ``B`` lists known-set sizes directly; ``w`` lists fractions turned into
    ``round(w * n)``. String entries of ``policies`` are expanded over the
    ``lam``/``rho``/``p`` grids where they apply; dict or PolicyConfig entries
    are taken as they are. ``resample=False`` draws one instance per ``n`` and
    reuses it in every trial.
    """

    name: str = "custom"
    kind: str = "simulation"  # or "bounds"
    dist: tuple[str, ...] = ("exp:1",)
    n: tuple[int, ...] = (20,)
    B: tuple[int, ...] | None = None
    w: tuple[float, ...] | None = None
    policies: tuple = ("switch",)
    lam: tuple[float, ...] = ()
    rho: tuple[float, ...] = ()
    p: tuple = ()
    noise: str = "none"
    tau: tuple[float, ...] = (0.0,)
    trials: int = 1000
    seed: int = 0
    estimator: str = "rom"
    enumeration_cap: int = DEFAULT_CAP
    resample: bool = True
    exact: bool = False
    curves: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("dist", "n", "policies", "lam", "rho", "p", "tau", "curves"):
            val = getattr(self, name)
            if isinstance(val, (str, int, float, dict, PolicyConfig)):
                val = (val,)
            object.__setattr__(self, name, tuple(val))
        for name in ("B", "w"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(val) if not isinstance(val, (int, float)) else (val,))
        object.__setattr__(self, "estimator", _normalize_estimator(self.estimator))
        if self.kind not in ("simulation", "bounds"):
            raise ParameterError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if not self.n or not self.tau or (self.kind == "simulation" and not self.policies):
            raise ParameterError("grids must be non-empty")
        if self.B is None and self.w is None:
            raise ParameterError("give B values or w fractions")
        if self.B is not None and not self.B or self.w is not None and not self.w:
            raise ParameterError("grids must be non-empty")
        if self.enumeration_cap < 1:
            raise ParameterError("enumeration cap must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ParameterError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["policies"] = [_config_to_dict(p) if isinstance(p, PolicyConfig) else p for p in self.policies]
        return d

    def B_values(self, n: int) -> list[int]:
        raw = list(self.B) if self.B is not None else [int(round(w * n)) for w in self.w]
        out = []
        for b in raw:
            if not 0 <= b <= n:
                raise ParameterError(f"B={b} outside [0, {n}]")
            if b not in out:
                out.append(b)
        return out

    def configs(self) -> list[PolicyConfig]:
        out = []
        for entry in self.policies:
            if isinstance(entry, PolicyConfig):
                out.append(entry)
            elif isinstance(entry, dict):
                out.append(_config_from_dict(entry))
            else:
                out.extend(_expand(entry, self.lam, self.rho, self.p))
        return out


def _config_from_dict(d: dict) -> PolicyConfig:
    d = dict(d)
    for sub in ("inner", "a", "b"):
        if isinstance(d.get(sub), dict):
            d[sub] = _config_from_dict(d[sub])
        elif isinstance(d.get(sub), str):
            d[sub] = parse_policy(d[sub])
    if "lambda" in d:
        d["lam"] = d.pop("lambda")
    return PolicyConfig(**d)


def _config_to_dict(c: PolicyConfig) -> dict:
    d = {"kind": c.kind}
    for name in ("lam", "rho", "p"):
        if getattr(c, name) is not None:
            d[name] = getattr(c, name)
    for sub in ("inner", "a", "b"):
        if getattr(c, sub) is not None:
            d[sub] = _config_to_dict(getattr(c, sub))
    if not c.virtual:
        d["virtual"] = False
    return d


def _expand(name: str, lams, rhos, ps) -> list[PolicyConfig]:
    name = name.lower()
    rhos = list(rhos) or [None]
    if name in ("preferential", "pa"):
        return [parse_policy(name, lam=l, rho=r) for l in (list(lams) or [None]) for r in rhos]
    if name in ("noisy-switch", "noisy_switch"):
        return [parse_policy(name, rho=r) for r in rhos]
    if name == "mixture":
        return [parse_policy(name, p=p) for p in (list(ps) or [None])]
    return [parse_policy(name)]


@dataclass(frozen=True)
class Point:
    """One grid coordinate with everything needed to estimate it."""

    experiment: str
    dist: str
    n: int
    B: int
    config: PolicyConfig
    noise: str = "none"
    tau: float = 0.0
    trials: int = 1000
    seed: int = 0
    estimator: str = "rom"
    resample: bool = True
    exact: bool = False
    enumeration_cap: int = DEFAULT_CAP

    @property
    def coordinate(self) -> str:
        c = self.config
        return f"{self.dist}|{self.n}|{self.B}|{_config_key(c)}|{self.noise}|{self.tau!r}"

    def noise_model(self):
        return with_tau(parse_noise(self.noise, self.tau), self.tau)


def _config_key(c: PolicyConfig) -> str:
    return json.dumps(_config_to_dict(c), sort_keys=True)


@dataclass
class EstimateRow:
    experiment: str
    algorithm: str
    n: int
    B: int
    lam: float | None
    rho: float | None
    p: float | None
    tau: float | None
    trials: int
    estimator: str
    mean_alg: float
    mean_opt: float
    ratio: float
    std_err: float
    exact: bool
    seed: int
    mean_error: float = math.nan  # E[eta] over trials; not part of the CSV
    error: str | None = None

    def __post_init__(self):
        if self.exact and self.error is None and self.std_err != 0:
            raise ValueError("exact rows carry no standard error")

    @property
    def w(self) -> float:
        return self.B / self.n if self.n else math.nan

    def get(self, name: str):
        name = {"lambda": "lam"}.get(name, name)
        return getattr(self, name)

    def csv_values(self) -> list[str]:
        return [_fmt(self.get(h)) for h in CSV_HEADER]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _columns(c: PolicyConfig, n: int, B: int):
    """(label, lambda, rho, p) as they appear in the CSV."""
    if c.kind == "preferential":
        inner_rho = c.inner.rho if c.inner.kind == "noisy-switch" else None
        return c.label, c.lam, inner_rho, None
    if c.kind == "noisy-switch":
        return c.label, None, c.rho, None
    if c.kind == "mixture":
        return c.label, None, None, c.resolved_p(n, B)
    return c.label, None, None, None


# ---------------------------------------------------------------------------
# estimators


def opt_objective(x: JobInstance) -> float:
    """Objective of the clairvoyant shortest-first schedule, computed by the engine."""
    return run(OptPolicy(x.sizes), x, record=False).objective


def _mean(v: np.ndarray) -> float:
    if v.size and v.min() == v.max():
        return float(v[0])
    return math.fsum(v.tolist()) / v.size


def ratio_of_means(alg: np.ndarray, opt: np.ndarray) -> tuple[float, float, float, float]:
    """(mean_alg, mean_opt, ratio, delta-method standard error)."""
    ma, mo = _mean(alg), _mean(opt)
    r = ma / mo
    k = alg.size
    if k < 2:
        return ma, mo, r, 0.0
    da = alg - ma if alg.min() != alg.max() else np.zeros_like(alg)
    do = opt - mo if opt.min() != opt.max() else np.zeros_like(opt)
    resid = da - r * do
    var = float(np.dot(resid, resid)) / (k - 1)
    return ma, mo, r, math.sqrt(var / k) / mo


def mean_of_ratios(alg: np.ndarray, opt: np.ndarray) -> tuple[float, float, float, float]:
    q = alg / opt
    mq = _mean(q)
    se = 0.0
    if q.size > 1 and q.min() != q.max():
        se = float(np.std(q, ddof=1)) / math.sqrt(q.size)
    return _mean(alg), _mean(opt), mq, se


def _instance(point: Point, trial: int) -> JobInstance:
    dist = parse_distribution(point.dist)
    key = (_INSTANCE, point.n, trial) if point.resample else (_INSTANCE, point.n)
    return sample_instance(dist, point.n, stream(point.seed, _key(point.dist), *key))


def simulate_trial(point: Point, trial: int, x: JobInstance | None = None,
                   opt: float | None = None) -> tuple[float, float, float]:
    """One trial: (ALG objective, OPT objective, total prediction error).

    Instance, known set and noise come from streams that do not depend on the
    policy, so every algorithm at the same (n, B) sees the same draws.
    """
    if x is None:
        x = _instance(point, trial)
    if opt is None:
        opt = opt_objective(x)
    base = _key(point.dist)
    known = sample_known_subset(point.n, point.B, stream(point.seed, base, _SUBSET, point.n, point.B, trial))
    view = apply_noise(x, known, point.noise_model(),
                       stream(point.seed, base, _NOISE, point.n, point.B, trial))
    policy = point.config.build(x, view)
    rng = stream(point.seed, _key(point.coordinate), _POLICY, trial)
    try:
        trace = run(policy, x, rng, record=False)
    except EngineError as exc:
        raise TrialError(str(exc), seed=point.seed, trial=trial, coordinate=point.coordinate) from exc
    return trace.objective, opt, prediction_error(x, view)


def estimate_ratio(point: Point) -> EstimateRow:
    """Monte Carlo estimate of E[ALG]/OPT at ``point`` (or the exact value if ``point.exact``)."""
    label, lam, rho, p = _columns(point.config, point.n, point.B)
    if point.exact:
        x = _instance(point, 0)
        value, count = exact_expected_objective(point.config, x, point.B, noise=point.noise_model(),
                                                cap=point.enumeration_cap)
        opt = opt_objective(x)
        return EstimateRow(point.experiment, label, point.n, point.B, lam, rho, p, point.tau, count,
                           point.estimator, value, opt, value / opt, 0.0, True, point.seed)
    k = point.trials
    alg = np.empty(k)
    opt = np.empty(k)
    eta = np.empty(k)
    fixed_x = fixed_opt = None
    if not point.resample:
        fixed_x = _instance(point, 0)
        fixed_opt = opt_objective(fixed_x)
    for t in range(k):
        alg[t], opt[t], eta[t] = simulate_trial(point, t, fixed_x, fixed_opt)
    fn = ratio_of_means if point.estimator == "rom" else mean_of_ratios
    ma, mo, r, se = fn(alg, opt)
    return EstimateRow(point.experiment, label, point.n, point.B, lam, rho, p, point.tau, k,
                       point.estimator, ma, mo, r, se, False, point.seed, mean_error=_mean(eta))


# ---------------------------------------------------------------------------
# exact enumeration


def _tie_orders(z: dict[int, float]) -> list[tuple[int, ...]]:
    """Every order of the known jobs sorted by z, one per arrangement of the ties."""
    jobs = sorted(z, key=lambda j: (z[j], j))
    groups = [list(g) for _, g in itertools.groupby(jobs, key=lambda j: z[j])]
    return [tuple(itertools.chain.from_iterable(combo))
            for combo in itertools.product(*(itertools.permutations(g) for g in groups))]


def _tie_count(z: dict[int, float]) -> int:
    values = sorted(z.values())
    return math.prod(math.factorial(len(list(g))) for _, g in itertools.groupby(values))


def _is_deterministic_noise(noise) -> bool:
    return noise is None or isinstance(noise, (NoNoise, AdversarialConstant))


def _switch_like(c: PolicyConfig) -> bool:
    return c.kind == "switch" or (c.kind == "noisy-switch" and c.rho == 0)


def _outcome_count(c: PolicyConfig, x: JobInstance, B: int, noise, cap: int) -> int:
    n = x.n
    kind = c.kind
    if kind in ("opt", "rr"):
        return 1
    if kind == "rtc":
        f = math.factorial(n) if n <= 20 else math.inf
        return f if f <= cap else n * (n - 1)
    if kind == "mixture":
        return _outcome_count(c.a, x, B, noise, cap) + _outcome_count(c.b, x, B, noise, cap)
    subsets = math.comb(n, B)
    if kind == "crrr":
        return subsets
    if subsets > cap:
        return subsets
    total = 0
    for known in itertools.combinations(range(n), B):
        view = apply_noise(x, known, noise, None) if not isinstance(noise, NoNoise) else \
            PredictionView.perfect(x, known)
        total += _tie_count(view.as_dict())
        if total > cap:
            break
    return total


def exact_expected_objective(config: PolicyConfig, x: JobInstance | Sequence[float], B: int, *,
                             noise=None, cap: int = DEFAULT_CAP) -> tuple[float, int]:
    """Exact expected objective over the known set and the policy's discrete randomness.

    Returns ``(expectation, number of outcomes enumerated)``. The known set is
    uniform over B-subsets; Switch-type policies additionally average over the
    arrangements of equal breakpoints. RTC averages over all n! orders when that
    fits under ``cap``; otherwise it enumerates the n(n-1) ordered pairs and
    sums their expected mutual delays, which gives the same expectation.
    """
    if not isinstance(x, JobInstance):
        x = JobInstance(tuple(float(s) for s in x))
    noise = NoNoise() if noise is None else noise
    if not 0 <= B <= x.n:
        raise ParameterError(f"need 0 <= B <= n, got B={B}")
    if not _is_deterministic_noise(noise):
        raise UnsupportedPolicyError("exact enumeration needs deterministic predictions")
    _check_supported(config)
    count = _outcome_count(config, x, B, noise, cap)
    if count > cap:
        raise EnumerationCapExceeded(count, cap)
    return _expect(config, x, B, noise, cap), count


def _check_supported(c: PolicyConfig):
    if c.kind == "noisy-switch" and c.rho != 0:
        raise UnsupportedPolicyError("noisy Switch draws a continuous breakpoint scale; use Monte Carlo")
    if c.kind == "preferential":
        _check_supported(c.inner)
    if c.kind == "mixture":
        _check_supported(c.a)
        _check_supported(c.b)


def _view(x, known, noise):
    if isinstance(noise, NoNoise):
        return PredictionView.perfect(x, known)
    return apply_noise(x, known, noise, None)


def _expect(c: PolicyConfig, x: JobInstance, B: int, noise, cap: int) -> float:
    n = x.n
    kind = c.kind
    if kind == "opt":
        return opt_objective(x)
    if kind == "rr":
        return run(c.build(x, PredictionView.empty(n)), x, record=False).objective
    if kind == "rtc":
        if n <= 20 and math.factorial(n) <= cap:
            vals = [run(RtcPolicy(order), x, record=False).objective for order in itertools.permutations(range(n))]
            return math.fsum(vals) / len(vals)
        # the job run first delays the other by its own size; each order of a pair has probability 1/2
        s = x.sizes
        pair = math.fsum(0.5 * s[i] + 0.5 * s[j] for i in range(n) for j in range(i + 1, n))
        return math.fsum(s) + pair
    if kind == "mixture":
        p = c.resolved_p(n, B)
        ea = _expect(c.a, x, B, noise, cap) if p > 0 else 0.0
        eb = _expect(c.b, x, B, noise, cap) if p < 1 else 0.0
        return p * ea + (1 - p) * eb
    if kind == "spjf" and B != n:
        raise ConfigurationError(f"SPJF needs predictions for all {n} jobs, got {B}")
    vals = []
    for known in itertools.combinations(range(n), B):
        view = _view(x, known, noise)
        if kind == "crrr":
            vals.append(run(CrrrPolicy(view), x, record=False).objective)
            continue
        z = view.as_dict()
        sub = []
        for order in _tie_orders(z):
            if kind == "spjf":
                policy = RtcPolicy(order)
            elif _switch_like(c):
                policy = SwitchPolicy(view, BreakpointSet(z, order))
            elif kind == "preferential":
                policy = PreferentialPolicy(c.lam, SwitchPolicy(view, BreakpointSet(z, order)),
                                            virtual=c.virtual)
            else:
                raise UnsupportedPolicyError(f"no exact enumeration for {kind!r}")
            sub.append(run(policy, x, record=False).objective)
        vals.append(math.fsum(sub) / len(sub))
    return math.fsum(vals) / len(vals)


# ---------------------------------------------------------------------------
# experiments


def bounds_rows(spec: ExperimentSpec) -> list[EstimateRow]:
    """Formula curves over the B grid, one row per (curve, n, B)."""
    curves = spec.curves or ("lower_exponential", "lower_heavy_tail", "crrr_upper", "switch_perfect")
    rows = []
    for n in spec.n:
        for B in spec.B_values(n):
            q = analysis.BoundQuery(n, B)
            values = {
                "lower_exponential": analysis.lower_bound("exponentialfinite", q),
                "lower_heavy_tail": analysis.asymptotic_heavy_tail(q.frac),
                "lower_exponential_asymptotic": analysis.asymptotic_exponential(q.frac),
                "crrr_lower": analysis.crrr_range(q)[0],
                "crrr_upper": analysis.crrr_range(q)[1],
                "switch_perfect": analysis.switch_perfect(q),
                "mixture_perfect": analysis.mixture_perfect(q),
            }
            for c in curves:
                if c not in values:
                    raise ParameterError(f"unknown curve {c!r}")
                rows.append(EstimateRow(spec.name, c, n, B, None, None, None, None, 0, "formula",
                                        math.nan, math.nan, values[c], 0.0, True, spec.seed))
    return rows


def points(spec: ExperimentSpec) -> list[Point]:
    configs = spec.configs()
    out = []
    for dist in spec.dist:
        exp_name = spec.name if len(spec.dist) == 1 else f"{spec.name}[{dist}]"
        for n in spec.n:
            for B in spec.B_values(n):
                for c in configs:
                    for tau in spec.tau:
                        out.append(Point(exp_name, dist, n, B, c, spec.noise, float(tau), spec.trials,
                                         spec.seed, spec.estimator, spec.resample, spec.exact,
                                         spec.enumeration_cap))
    return out


def _safe_estimate(point: Point) -> EstimateRow:
    try:
        return estimate_ratio(point)
    except Exception as exc:  # one bad coordinate must not sink the whole grid
        log.error("coordinate %s failed: %s", point.coordinate, exc)
        label, lam, rho, p = _columns(point.config, point.n, point.B)
        nan = math.nan
        return EstimateRow(point.experiment, label, point.n, point.B, lam, rho, p, point.tau, point.trials,
                           point.estimator, nan, nan, nan, nan, point.exact, point.seed,
                           error=f"{type(exc).__name__}: {exc}")


def run_experiment(spec: ExperimentSpec, out=None, *, workers: int = 1) -> list[EstimateRow]:
    """Evaluate every grid coordinate; rows come back in grid order whatever ``workers`` is."""
    if spec.kind == "bounds":
        rows = bounds_rows(spec)
    else:
        pts = points(spec)
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                rows = list(pool.map(_safe_estimate, pts))
        else:
            rows = [_safe_estimate(p) for p in pts]
    if out is not None:
        write_csv(rows, out)
    return rows


def write_csv(rows: Iterable[EstimateRow], path_or_file) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.csv_values())
    finally:
        if own:
            fh.close()


def rows_to_csv(rows: Iterable[EstimateRow]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# presets

FIG_TRIALS = 10_000


def preset(name: str) -> ExperimentSpec:
    name = name.lower()
    grid = tuple(round(0.1 * k, 10) for k in range(11))
    if name == "fig1":
        return ExperimentSpec(name="fig1", kind="bounds", n=(1000,), w=tuple(round(0.05 * k, 10) for k in range(21)),
                              policies=(), trials=1,
                              curves=("lower_exponential", "lower_heavy_tail", "crrr_upper", "switch_perfect"))
    if name == "fig2":
        return ExperimentSpec(name="fig2", dist=("exp:1", "phi:0.51:10000"), n=(20, 1000), w=grid,
                              policies=("switch", "crrr"), trials=FIG_TRIALS)
    if name == "fig3-left":
        return ExperimentSpec(name="fig3-left", dist=("pareto:1:1.1",), n=(50,), B=(25,),
                              policies=("preferential",), lam=(0.0, 0.5, 1.0), rho=(0.0, 0.5),
                              noise="gaussian", tau=tuple(float(t) for t in range(0, 11)),
                              trials=FIG_TRIALS, resample=False)
    if name == "fig3-right":
        return ExperimentSpec(name="fig3-right", dist=("pareto:1:1.1",), n=(50,), B=(10, 20, 30, 40, 50),
                              policies=("preferential",), lam=(1.0,), rho=(0.5,),
                              noise="gaussian", tau=tuple(float(t) for t in range(0, 11)),
                              trials=FIG_TRIALS, resample=False)
    if name == "fig4":
        return ExperimentSpec(name="fig4", dist=("twopoint:1:2:0.5",), n=(100,), B=(50, 95),
                              policies=("noisy-switch",), rho=(0.0, 0.1, 0.5), noise="uniform",
                              tau=tuple(round(0.01 * k, 10) for k in range(16)), trials=FIG_TRIALS)
    raise ParameterError(f"unknown preset {name!r}; choose fig1, fig2, fig3-left, fig3-right or fig4")


PRESETS = ("fig1", "fig2", "fig3-left", "fig3-right", "fig4")


# ---------------------------------------------------------------------------
# SVG

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
            "#bcbd22", "#17becf")


def _ticks(lo, hi, k=5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (k - 1) for i in range(k)]


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_svg(rows: Sequence[EstimateRow], x: str, series: Sequence[str], path=None, *, y: str = "ratio",
               bands: bool = False, title: str | None = None, width: int = 720, height: int = 440) -> str:
    """Line chart of ``y`` against ``x``, one polyline per distinct value of the ``series`` fields.

    Returns the SVG text and writes it to ``path`` when given.
    """
    rows = [r for r in rows if r.error is None]
    if not rows:
        raise ParameterError("nothing to plot")
    groups: dict[tuple, list[tuple[float, float, float]]] = {}
    for r in rows:
        xv, yv = float(r.get(x)), float(r.get(y))
        if not (math.isfinite(xv) and math.isfinite(yv)):
            continue
        key = tuple(r.get(s) for s in series)
        se = r.std_err if math.isfinite(r.std_err) else 0.0
        groups.setdefault(key, []).append((xv, yv, se))
    if not groups:
        raise ParameterError("no finite points to plot")
    pts = [p for g in groups.values() for p in g]
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    lows = [p[1] - (2 * p[2] if bands else 0) for p in pts]
    highs = [p[1] + (2 * p[2] if bands else 0) for p in pts]
    y0, y1 = min(lows), max(highs)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    left, right, top, bottom = 70, 200, 40, 60
    pw, ph = width - left - right, height - top - bottom
    sx = lambda v: left + (v - x0) / (x1 - x0) * pw
    sy = lambda v: top + (y1 - v) / (y1 - y0) * ph

    varying = [i for i, s in enumerate(series) if len({k[i] for k in groups}) > 1] or list(range(len(series)))

    def label(key):
        return ", ".join(f"{series[i]}={_fmt(key[i]) if not isinstance(key[i], str) else key[i]}" for i in varying)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{_esc(title)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.2f}" y1="{top + ph}" x2="{sx(t):.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{top + ph + 18}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{left - 5}" y1="{sy(t):.2f}" x2="{left}" y2="{sy(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{sy(t) + 4:.2f}" text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 15}" text-anchor="middle">{_esc(x)}</text>')
    out.append(f'<text x="18" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ph / 2:.1f})">{_esc(y)}</text>')
    for idx, (key, g) in enumerate(groups.items()):
        g.sort()
        color = _PALETTE[idx % len(_PALETTE)]
        if bands and any(p[2] > 0 for p in g):
            upper = [f"{sx(p[0]):.2f},{sy(p[1] + 2 * p[2]):.2f}" for p in g]
            lower = [f"{sx(p[0]):.2f},{sy(p[1] - 2 * p[2]):.2f}" for p in reversed(g)]
            out.append(f'<polygon class="band" points="{" ".join(upper + lower)}" fill="{color}" '
                       f'fill-opacity="0.15" stroke="none"/>')
        coords = " ".join(f"{sx(p[0]):.2f},{sy(p[1]):.2f}" for p in g)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 14 + 18 * idx
        lx = left + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}">{_esc(label(key))}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def default_axes(rows: Sequence[EstimateRow]) -> tuple[str, list[str]]:
    """Pick a sensible x axis and series split for a result set."""
    taus = {r.tau for r in rows}
    x = "tau" if len(taus) > 1 else "w"
    series = ["experiment", "algorithm", "n", "lambda", "rho", "p"]
    if x == "tau":
        series.append("B")
    return x, series
