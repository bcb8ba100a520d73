"""Job-size instances, known subsets and noisy predictions.

All samplers take a ``numpy.random.Generator`` so that a run is fully
determined by its seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ParameterError(ValueError):
    """Raised when a distribution, noise model or policy parameter is out of range."""


@dataclass(frozen=True)
class JobInstance:
    sizes: tuple[float, ...]

    def __post_init__(self):
        sizes = tuple(float(s) for s in self.sizes)
        if len(sizes) < 1:
            raise ParameterError("an instance needs at least one job")
        if not all(s > 0 and math.isfinite(s) for s in sizes):
            raise ParameterError(f"job sizes must be finite and > 0, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def n(self) -> int:
        return len(self.sizes)

    def __len__(self):
        return len(self.sizes)

    def __getitem__(self, i):
        return self.sizes[i]


@dataclass(frozen=True)
class PredictionView:
    """What a policy is told up front: the known jobs (in sigma order) and their predictions."""

    known: tuple[int, ...]
    predictions: tuple[float, ...]
    n: int

    def __post_init__(self):
        known = tuple(int(i) for i in self.known)
        preds = tuple(float(y) for y in self.predictions)
        if len(known) != len(preds):
            raise ParameterError("one prediction per known job is required")
        if len(set(known)) != len(known):
            raise ParameterError(f"known indices must be distinct: {known}")
        if not 0 <= len(known) <= self.n:
            raise ParameterError("0 <= B <= n violated")
        if any(i < 0 or i >= self.n for i in known):
            raise ParameterError(f"known index out of range for n={self.n}: {known}")
        if any(not (y >= 0) for y in preds):
            raise ParameterError(f"predictions must be >= 0: {preds}")
        object.__setattr__(self, "known", known)
        object.__setattr__(self, "predictions", preds)

    @property
    def B(self) -> int:
        return len(self.known)

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.known, self.predictions))

    def prefix(self, B: int) -> "PredictionView":
        """View restricted to the first ``B`` known jobs (sigma(1..B))."""
        if not 0 <= B <= self.B:
            raise ParameterError(f"prefix length {B} outside [0, {self.B}]")
        return PredictionView(self.known[:B], self.predictions[:B], self.n)

    @classmethod
    def perfect(cls, x: JobInstance, known: Sequence[int]) -> "PredictionView":
        known = [int(i) for i in known]
        return cls(tuple(known), tuple(x.sizes[i] for i in known), x.n)

    @classmethod
    def empty(cls, n: int) -> "PredictionView":
        return cls((), (), n)


# ---------------------------------------------------------------------------
# size distributions


class SizeDistribution:
    name = "abstract"

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(SizeDistribution):
    rate: float = 1.0
    name = "exp"

    def __post_init__(self):
        if not self.rate > 0:
            raise ParameterError("exponential rate must be > 0")

    def sample(self, n, rng):
        x = rng.exponential(1.0 / self.rate, size=n)
        # a zero draw has probability ~2^-53 but would break positivity
        while np.any(x <= 0):
            bad = x <= 0
            x[bad] = rng.exponential(1.0 / self.rate, size=int(bad.sum()))
        return x

    def describe(self):
        return f"exp:{self.rate:g}"


@dataclass(frozen=True)
class TruncatedPolyTail(SizeDistribution):
    """Pr(X >= t) = ((1+t)^-r - (1+a)^-r) / (1 - (1+a)^-r) on [0, a)."""

    r: float
    a: float
    name = "phi"

    def __post_init__(self):
        if not (0.5 < self.r <= 1.0):
            raise ParameterError("r must lie in (1/2, 1]")
        if not self.a > 0:
            raise ParameterError("truncation a must be > 0")

    def tail(self, t):
        c = (1.0 + self.a) ** (-self.r)
        t = np.asarray(t, dtype=float)
        val = ((1.0 + t) ** (-self.r) - c) / (1.0 - c)
        return np.where(t < self.a, np.clip(val, 0.0, 1.0), 0.0)

    def inverse_tail(self, u):
        c = (1.0 + self.a) ** (-self.r)
        s = np.asarray(u, dtype=float) * (1.0 - c) + c
        return np.expm1(-np.log(s) / self.r)

    def sample(self, n, rng):
        u = rng.random(n)
        while True:
            x = self.inverse_tail(u)
            bad = (u <= 0) | (x <= 0) | (x >= self.a)
            if not bad.any():
                return x
            u[bad] = rng.random(int(bad.sum()))

    def describe(self):
        return f"phi:{self.r:g}:{self.a:g}"


@dataclass(frozen=True)
class Pareto(SizeDistribution):
    """Classical Pareto: support [scale, inf), Pr(X > t) = (scale/t)^shape."""

    scale: float = 1.0
    shape: float = 1.1
    name = "pareto"

    def __post_init__(self):
        if not (self.scale > 0 and self.shape > 0):
            raise ParameterError("Pareto scale and shape must be > 0")

    def sample(self, n, rng):
        return self.scale * (1.0 + rng.pareto(self.shape, size=n))

    def describe(self):
        return f"pareto:{self.scale:g}:{self.shape:g}"


@dataclass(frozen=True)
class TwoPoint(SizeDistribution):
    """``v1`` with probability ``p``, else ``v2``."""

    v1: float = 1.0
    v2: float = 2.0
    p: float = 0.5
    name = "twopoint"

    def __post_init__(self):
        if not (self.v1 > 0 and self.v2 > 0):
            raise ParameterError("two-point values must be > 0")
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError("p must be in [0, 1]")

    def sample(self, n, rng):
        return np.where(rng.random(n) < self.p, self.v1, self.v2).astype(float)

    def describe(self):
        return f"twopoint:{self.v1:g}:{self.v2:g}:{self.p:g}"


@dataclass(frozen=True)
class Constant(SizeDistribution):
    v: float = 1.0
    name = "const"

    def __post_init__(self):
        if not self.v > 0:
            raise ParameterError("constant size must be > 0")

    def sample(self, n, rng):
        return np.full(n, float(self.v))

    def describe(self):
        return f"const:{self.v:g}"


@dataclass(frozen=True)
class Explicit(SizeDistribution):
    sizes: tuple[float, ...] = field(default_factory=tuple)
    name = "explicit"

    def __post_init__(self):
        sizes = tuple(float(s) for s in self.sizes)
        if not sizes or any(not s > 0 for s in sizes):
            raise ParameterError("explicit sizes must be a non-empty list of positive values")
        object.__setattr__(self, "sizes", sizes)

    def sample(self, n, rng):
        if n != len(self.sizes):
            raise ParameterError(f"explicit list has {len(self.sizes)} sizes, asked for n={n}")
        return np.array(self.sizes, dtype=float)

    def describe(self):
        return "explicit:" + ",".join(f"{s:g}" for s in self.sizes)


def parse_distribution(text: str) -> SizeDistribution:
    """Parse ``exp:1``, ``phi:0.51:10000``, ``pareto:1:1.1``, ``twopoint:1:2:0.5``,
    ``const:3`` or ``explicit:1,2,3``."""
    kind, _, rest = text.strip().partition(":")
    kind = kind.lower()
    args = [a for a in rest.split(":") if a] if rest else []
    try:
        if kind in ("exp", "exponential"):
            return Exponential(*(float(a) for a in args))
        if kind in ("phi", "polytail"):
            return TruncatedPolyTail(*(float(a) for a in args))
        if kind == "pareto":
            return Pareto(*(float(a) for a in args))
        if kind in ("twopoint", "two-point"):
            return TwoPoint(*(float(a) for a in args))
        if kind in ("const", "constant"):
            return Constant(*(float(a) for a in args))
        if kind == "explicit":
            return Explicit(tuple(float(s) for s in rest.split(",")))
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {kind!r}: {text}") from exc
    raise ParameterError(f"unknown distribution {text!r}")


def sample_instance(dist: SizeDistribution, n: int, rng: np.random.Generator) -> JobInstance:
    if n < 1:
        raise ParameterError("n must be >= 1")
    return JobInstance(tuple(dist.sample(n, rng).tolist()))


def sample_known_subset(n: int, B: int, rng: np.random.Generator) -> list[int]:
    """Ordered prefix sigma(1..B) of a uniformly random permutation of range(n)."""
    if not 0 <= B <= n:
        raise ParameterError(f"need 0 <= B <= n, got B={B}, n={n}")
    if B == 0:
        return []
    return rng.permutation(n)[:B].tolist()


# ---------------------------------------------------------------------------
# noise models


class NoiseModel:
    name = "none"

    def errors(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.zeros_like(x)

    def predict(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.maximum(x + self.errors(x, rng), 0.0)

    def describe(self) -> str:
        return "none"


@dataclass(frozen=True)
class NoNoise(NoiseModel):
    name = "none"

    def predict(self, x, rng):
        return np.array(x, dtype=float)


@dataclass(frozen=True)
class GaussianNoise(NoiseModel):
    tau: float = 0.0
    name = "gaussian"

    def __post_init__(self):
        if not self.tau >= 0:
            raise ParameterError("tau must be >= 0")

    def errors(self, x, rng):
        return rng.normal(0.0, self.tau, size=len(x))

    def describe(self):
        return f"gaussian:{self.tau:g}"


@dataclass(frozen=True)
class UniformNoise(NoiseModel):
    tau: float = 0.0
    name = "uniform"

    def __post_init__(self):
        if not self.tau >= 0:
            raise ParameterError("tau must be >= 0")

    def errors(self, x, rng):
        return rng.uniform(-self.tau, self.tau, size=len(x))

    def describe(self):
        return f"uniform:{self.tau:g}"


@dataclass(frozen=True)
class AdversarialConstant(NoiseModel):
    """Every prediction equals ``c`` whatever the true size."""

    c: float = 0.0
    name = "adversarial"

    def __post_init__(self):
        if not self.c >= 0:
            raise ParameterError("c must be >= 0")

    def predict(self, x, rng):
        return np.full(len(x), float(self.c))

    def describe(self):
        return f"adversarial:{self.c:g}"


def parse_noise(text: str | None, tau: float | None = None) -> NoiseModel:
    """``none``, ``gaussian[:tau]``, ``uniform[:tau]`` or ``adversarial:c``."""
    if text is None or text.lower() in ("", "none"):
        return NoNoise()
    kind, _, rest = text.partition(":")
    kind = kind.lower()
    val = float(rest) if rest else (tau if tau is not None else 0.0)
    if kind in ("gaussian", "normal"):
        return GaussianNoise(val)
    if kind == "uniform":
        return UniformNoise(val)
    if kind in ("adversarial", "const", "constant"):
        return AdversarialConstant(val)
    raise ParameterError(f"unknown noise model {text!r}")


def with_tau(model: NoiseModel, tau: float) -> NoiseModel:
    if isinstance(model, GaussianNoise):
        return GaussianNoise(tau)
    if isinstance(model, UniformNoise):
        return UniformNoise(tau)
    return model


def apply_noise(x: JobInstance, known: Sequence[int], model: NoiseModel,
                rng: np.random.Generator) -> PredictionView:
    known = [int(i) for i in known]
    if any(i < 0 or i >= x.n for i in known):
        raise ParameterError(f"known index out of range: {known}")
    true = np.array([x.sizes[i] for i in known], dtype=float)
    if isinstance(model, NoNoise) or model is None:
        preds = true
    else:
        preds = model.predict(true, rng)
    return PredictionView(tuple(known), tuple(preds.tolist()), x.n)


def prediction_error(x: JobInstance, view: PredictionView) -> float:
    """Total l1 error of the predictions the policy can see."""
    return float(sum(abs(x.sizes[i] - y) for i, y in zip(view.known, view.predictions)))
