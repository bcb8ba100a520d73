"""Closed-form objectives, competitive-ratio bounds and the G/alpha quadrature pipeline.

Integrals over [0, inf) are mapped to [0, 1) with ``t = s / (1 - s)`` and
handed to adaptive Gauss-Kronrod (``scipy.integrate.quad``). Heavy-tailed
families declare the algebraic exponent of their integrand at ``s -> 1``; a
power substitution then removes the endpoint singularity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .instances import JobInstance, ParameterError


class NumericError(ArithmeticError):
    pass


class InfiniteExpectationError(ValueError):
    pass


def _sizes(x) -> np.ndarray:
    return np.asarray(x.sizes if isinstance(x, JobInstance) else x, dtype=float)


def sum_pairwise_min(x) -> float:
    """sum_{i<j} min(x_i, x_j) via the sorted-rank identity sum_i (n - i) x_(i)."""
    s = np.sort(_sizes(x))
    n = len(s)
    return math.fsum((s * (n - 1 - np.arange(n))).tolist())


def closed_form_objective(kind: str, x) -> float:
    s = _sizes(x)
    total = math.fsum(s.tolist())
    kind = kind.lower()
    if kind == "opt":
        return total + sum_pairwise_min(s)
    if kind in ("rr", "roundrobin", "round-robin"):
        return total + 2.0 * sum_pairwise_min(s)
    if kind in ("rtc", "rtcexpected", "rtc-expected"):
        return 0.5 * (len(s) + 1) * total
    raise ParameterError(f"no closed form for {kind!r}")


# ---------------------------------------------------------------------------
# bound queries


@dataclass(frozen=True)
class BoundQuery:
    n: int
    B: int
    w: float | None = None
    rho: float | None = None
    lam: float | None = None
    error: float | None = None  # n * E[eta] / OPT

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError("bounds need n >= 2")
        if not 0 <= self.B <= self.n:
            raise ParameterError("need 0 <= B <= n")
        if self.w is not None and not 0.0 <= self.w <= 1.0:
            raise ParameterError("w must be in [0, 1]")
        if self.rho is not None and not 0.0 < self.rho <= 1.0:
            raise ParameterError("rho must be in (0, 1]")
        if self.lam is not None and not 0.0 < self.lam < 1.0:
            raise ParameterError("lambda must be in (0, 1)")
        if self.error is not None and not self.error >= 0:
            raise ParameterError("normalized error must be >= 0")

    @property
    def frac(self) -> float:
        return self.B / self.n

    @property
    def pair_frac(self) -> float:
        """(B/n)(1 - (B-1)/(n-1)): the share of known/unknown pairs, up to a factor."""
        return self.frac * (1.0 - (self.B - 1) / (self.n - 1))


def _need(q: BoundQuery, *names):
    for name in names:
        if getattr(q, name) is None:
            raise ParameterError(f"this bound needs {name!r}")


def crrr_range(q: BoundQuery) -> tuple[float, float]:
    f = q.frac
    return (2 - f - 2 * (1 - f) / ((q.n + 1) * (q.B + 1)), 2 - f)


def switch_perfect(q: BoundQuery) -> float:
    f = q.frac
    return 2 - f - 2 * (1 - f) / (q.n + 1)


def mixture_perfect(q: BoundQuery) -> float:
    f = q.frac
    return 2 - f - 2 * (1 - f) * (2 - f) / (q.n + 3 - 2 * f)


def lemma7_consistency(q: BoundQuery) -> float:
    return 2 - q.frac + q.rho * q.pair_frac


def lemma7_smoothness(q: BoundQuery) -> float:
    return 4.0 / q.rho * (1 - q.frac) + q.frac


def lemma7(q: BoundQuery, precise: bool = False) -> float:
    """Upper bound on E[Switch]/OPT with breakpoints xi*y, xi = 1 + Exp(mean rho).

    ``precise=True`` keeps the -2(C-1)/(n+1) correction the coarse form drops.
    """
    _need(q, "rho", "error")
    c = lemma7_consistency(q)
    if precise:
        c = c - 2 * (c - 1) / (q.n + 1)
    return c + lemma7_smoothness(q) * q.error


def theorem8(q: BoundQuery) -> float:
    _need(q, "rho", "lam", "error")
    lam = q.lam
    return min(2.0 / (1.0 - lam),
               lemma7_consistency(q) / lam + lemma7_smoothness(q) / lam * q.error)


def upper_bound(kind: str, q: BoundQuery, precise: bool = False):
    kind = kind.lower()
    if kind in ("crrrrange", "crrr"):
        return crrr_range(q)
    if kind in ("switchperfect", "switch"):
        return switch_perfect(q)
    if kind in ("mixtureperfect", "mixture"):
        return mixture_perfect(q)
    if kind == "lemma7":
        return lemma7(q, precise=precise)
    if kind == "theorem8":
        return theorem8(q)
    raise ParameterError(f"unknown upper bound {kind!r}")


# ---------------------------------------------------------------------------
# phi families


class PhiFamily:
    """Size law Pr(X <= t) = 1 - phi(0)/phi(t).

    Subclasses supply phi, phi', the closed-form infimum of G over T when
    known, and the integrals of 1/phi and 1/phi^2 over [0, inf).
    """

    name = "phi"
    # integrand of the alpha numerator behaves like (1-s)^tail_exponent as s -> 1
    tail_exponent: float | None = None

    def phi(self, t):
        raise NotImplementedError

    def dphi(self, t):
        raise NotImplementedError

    def inv_phi(self, t):
        return 1.0 / self.phi(t)

    def density(self, x):
        """phi'(x) / phi(x)^2."""
        return self.dphi(x) / self.phi(x) ** 2

    def kink(self) -> float | None:
        """Point where the closed-form infimum switches branch, if any."""
        return None

    def inf_g_closed(self, x: float) -> float:
        raise NotImplementedError

    def int_inv_phi(self) -> float:
        return _integrate_half_line(self.inv_phi)

    def int_inv_phi2(self) -> float:
        return _integrate_half_line(lambda t: self.inv_phi(t) ** 2)


@dataclass(frozen=True)
class ExpPhi(PhiFamily):
    name = "exp"

    def phi(self, t):
        return math.exp(t)

    def dphi(self, t):
        return math.exp(t)

    def inv_phi(self, t):
        return math.exp(-t)

    def density(self, x):
        return math.exp(-x)

    def kink(self):
        return 1.0

    def inf_g_closed(self, x):
        return x if x < 1.0 else 1.0

    def g_closed(self, x, T):
        return 1.0 + (x - 1.0) * math.exp(-(T - x))

    def int_inv_phi(self):
        return 1.0

    def int_inv_phi2(self):
        return 0.5


@dataclass(frozen=True)
class PolyTailPhi(PhiFamily):
    r: float = 0.75
    name = "polytail"

    def __post_init__(self):
        if not 0.5 < self.r <= 1.0:
            raise ParameterError("r must lie in (1/2, 1]")

    @property
    def tail_exponent(self):
        # inf_G * phi'/phi^2 ~ x^(-2r) and dx = ds/(1-s)^2
        return 2.0 * self.r - 2.0

    def phi(self, t):
        return (1.0 + t) ** self.r

    def dphi(self, t):
        return self.r * (1.0 + t) ** (self.r - 1.0)

    def inv_phi(self, t):
        return (1.0 + t) ** (-self.r)

    def density(self, x):
        return self.r * (1.0 + x) ** (-self.r - 1.0)

    def kink(self):
        return 1.0 / self.r

    def inf_g_closed(self, x):
        r = self.r
        if x <= 1.0 / r:
            return x
        if r == 1.0:
            return 1.0 + math.log(x)
        return -1.0 / (1.0 - r) + (r * x) ** (1.0 - r) / (r * (1.0 - r))

    def int_inv_phi(self):
        return math.inf

    def int_inv_phi2(self):
        return 1.0 / (2.0 * self.r - 1.0)


def parse_phi(text: str) -> PhiFamily:
    kind, _, rest = text.partition(":")
    if kind.lower() == "exp":
        return ExpPhi()
    if kind.lower() in ("poly", "polytail", "phi"):
        return PolyTailPhi(float(rest) if rest else 0.75)
    raise ParameterError(f"unknown phi family {text!r}")


# ---------------------------------------------------------------------------
# quadrature


def _integrate_half_line(f: Callable[[float], float], a: float = 0.0, *, epsabs=1e-12,
                         epsrel=1e-10, tail_exponent=None, limit=200) -> float:
    """Integral of f over [a, inf) after the substitution t = s/(1-s), s in [a/(1+a), 1).

    If the transformed integrand is known to blow up like (1-s)^tail_exponent,
    a second substitution 1-s = w^m with m = 1/(1+tail_exponent) flattens it.
    """
    s0 = a / (1.0 + a)

    def g(s):
        if s >= 1.0:
            return 0.0
        u = 1.0 - s
        return f(s / u) / (u * u)

    if tail_exponent is None:
        lo, hi, h = s0, 1.0, g
        head = 0.0
    else:
        m = 1.0 / (1.0 + tail_exponent)

        def h(w):
            u = w ** m
            return m * f((1.0 - u) / u) * u ** (-1.0 - 1.0 / m)

        # below u = 1e-100 h is flat to double precision, so that sliver is a rectangle
        lo, hi = 1e-100 ** (1.0 / m), (1.0 - s0) ** (1.0 / m)
        head = h(lo) * lo
    val, err, *info = integrate.quad(h, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=limit, full_output=1)
    if len(info) > 2 and err > max(epsabs, epsrel * abs(val)) * 100:
        raise NumericError(f"quadrature did not converge: value={val!r}, abs error estimate={err!r}")
    return val + head


def _integrate_finite(f, a, b, *, epsabs=1e-12, epsrel=1e-10):
    if b <= a:
        return 0.0
    val, err, *info = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=200, full_output=1)
    if len(info) > 2 and err > max(epsabs, epsrel * abs(val)) * 100:
        raise NumericError(f"quadrature did not converge on [{a}, {b}]: error estimate {err!r}")
    return val


def g_phi(phi: PhiFamily, x: float, T: float) -> float:
    """G(x, T) = int_0^{T-x} dt/phi(t) + x/phi(T-x), the integral by adaptive quadrature."""
    if not x > 0:
        raise ParameterError("x must be > 0")
    if T < x:
        raise ParameterError(f"need T >= x, got T={T}, x={x}")
    u = T - x
    if u == 0:
        return x * phi.inv_phi(0.0)
    # t = expm1(v) keeps both fast-decaying and heavy-tailed 1/phi smooth
    integral = _integrate_finite(lambda v: phi.inv_phi(math.expm1(v)) * math.exp(v), 0.0, math.log1p(u),
                                 epsabs=1e-12, epsrel=1e-12)
    return integral + x * phi.inv_phi(u)


def _golden_min(f, lo, hi, tol=1e-10, max_iter=500):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    cands = [(f(lo), lo), (fc, c), (fd, d), (f(hi), hi)]
    return min(cands)


def inf_g_phi_numeric(phi: PhiFamily, x: float, tol: float = 1e-8) -> float:
    """inf over T >= x of G(x, T) by golden-section search on s = log1p(T-x)/(1+log1p(T-x))."""

    def G_of_s(s):
        v = s / (1.0 - s)
        u = math.expm1(v)
        if not math.isfinite(u):
            return phi_limit
        return g_phi(phi, x, x + u)

    # T -> inf limit is int_0^inf 1/phi (possibly infinite)
    I1 = phi.int_inv_phi()
    phi_limit = I1 if math.isfinite(I1) else math.inf
    # horizons beyond T - x = 1e15 add nothing at double precision
    v_max = math.log(1e15)
    best, _ = _golden_min(G_of_s, 0.0, v_max / (1.0 + v_max), tol=tol)
    return min(best, phi_limit)


def inf_g_phi(phi: PhiFamily, x: float, numeric: bool = False) -> float:
    if not x > 0:
        raise ParameterError("x must be > 0")
    if numeric:
        return inf_g_phi_numeric(phi, x)
    try:
        return phi.inf_g_closed(x)
    except NotImplementedError:
        return inf_g_phi_numeric(phi, x)


def alpha_phi(phi: PhiFamily, numeric_inf: bool = False) -> float:
    """alpha = int inf_T G(x,T) phi'(x)/phi(x)^2 dx / int dt/phi(t)^2."""
    phi0 = phi.phi(0.0)

    def integrand(x):
        return inf_g_phi(phi, x, numeric=numeric_inf) * phi.density(x)

    k = phi.kink()
    if k is None:
        num = _integrate_half_line(integrand, tail_exponent=phi.tail_exponent, epsrel=1e-10)
    else:
        num = _integrate_finite(integrand, 0.0, k) + \
            _integrate_half_line(integrand, k, tail_exponent=phi.tail_exponent, epsrel=1e-10)
    den = phi.int_inv_phi2()
    if not (math.isfinite(num) and math.isfinite(den) and den > 0):
        raise NumericError(f"alpha quadrature failed: numerator={num!r}, denominator={den!r}")
    # the lower-bound argument normalizes by phi(0)^2
    return phi0 ** 2 * num / den


# ---------------------------------------------------------------------------
# lower bounds


def exponential_constant(q: BoundQuery) -> float:
    return 2 - q.frac - (4 / math.e - 1) * q.pair_frac


def lower_bound(kind: str, q: BoundQuery, phi: PhiFamily | None = None, alpha: float | None = None) -> float:
    kind = kind.lower()
    if kind in ("exponentialfinite", "exp"):
        c = exponential_constant(q)
        return c - 4 * (c - 1) / (q.n + 3)
    if kind in ("heavytailasymptotic", "heavytail"):
        _need(q, "w")
        w = q.w
        return (2 - w) - (3 - 2 * math.sqrt(2)) * w * (1 - w)
    if kind in ("asymptoticgeneric", "asymptotic"):
        _need(q, "w")
        if alpha is None:
            alpha = alpha_phi(phi if phi is not None else ExpPhi())
        w = q.w
        return 2 - 2 * (2 - alpha) * w + (3 - 2 * alpha) * w * w
    if kind in ("genericfinite", "generic"):
        phi = phi if phi is not None else ExpPhi()
        I1 = phi.int_inv_phi()
        if not math.isfinite(I1):
            raise InfiniteExpectationError(
                f"{phi.name} has infinite mean; only the asymptotic bound applies")
        if alpha is None:
            alpha = alpha_phi(phi)
        I2 = phi.int_inv_phi2()
        c = (2 - q.frac) - (3 - 2 * alpha) * q.pair_frac
        return c - (c - 1) / (1 + (q.n - 1) / 2 * I2 / I1)
    raise ParameterError(f"unknown lower bound {kind!r}")


def asymptotic_exponential(w: float) -> float:
    return (2 - w) - (4 / math.e - 1) * w * (1 - w)


def asymptotic_heavy_tail(w: float) -> float:
    return (2 - w) - (3 - 2 * math.sqrt(2)) * w * (1 - w)


# ---------------------------------------------------------------------------
# randomized breakpoints xi = 1 + Exp(mean rho)


@dataclass(frozen=True)
class Lemma6Constants:
    rho: float
    beta: float
    gamma: float
    lipschitz: float
    mean_xi: float

    def c1(self, n: int, B: int) -> float:
        f = B / n
        return 2 - f - (2 - self.beta - self.gamma) * f * (1 - (B - 1) / (n - 1))

    def c2(self, n: int, B: int) -> float:
        return (1 + self.lipschitz + self.mean_xi) * (n - B) + B - 1


def g_breakpoint(s: float, rho: float) -> float:
    """(1-s) Pr(xi < s) + E[xi 1{xi < s}] for xi = 1 + Exp(mean rho), by quadrature."""
    if s <= 1.0:
        return 0.0
    dens = lambda t: math.exp(-(t - 1.0) / rho) / rho
    prob = _integrate_finite(dens, 1.0, s)
    first = _integrate_finite(lambda t: t * dens(t), 1.0, s)
    return (1.0 - s) * prob + first


def lemma6_constants(rho: float, verify: bool = False, grid: Sequence[float] | None = None) -> Lemma6Constants:
    if not rho > 0:
        raise ParameterError("rho must be > 0")
    consts = Lemma6Constants(rho, 0.0, 2.0 + rho, 1.0 / rho, 1.0 + rho)
    if verify:
        small = np.linspace(1e-3, 1.0, 200) if grid is None else [s for s in grid if s <= 1]
        large = np.linspace(1.0, 100.0, 2000) if grid is None else [s for s in grid if s >= 1]
        beta = max(g_breakpoint(s, rho) / s for s in small)
        gamma = max(g_breakpoint(s, rho) + s for s in large)
        if abs(beta - consts.beta) > 1e-6 or abs(gamma - consts.gamma) > 1e-6:
            raise NumericError(f"grid check failed: beta={beta}, gamma={gamma}")
    return consts


def lemma6_grid_sup(rho: float, lo: float = 1.0, hi: float = 100.0, points: int = 2000) -> float:
    return max(g_breakpoint(s, rho) + s for s in np.linspace(lo, hi, points))


# ---------------------------------------------------------------------------
# bound tables


def applicable_bounds(q: BoundQuery) -> list[tuple[str, float]]:
    """Every bound that the query's parameters allow, as (label, value) pairs."""
    rows = []
    lo, hi = crrr_range(q)
    rows.append(("crrr_lower", lo))
    rows.append(("crrr_upper", hi))
    rows.append(("switch_perfect", switch_perfect(q)))
    rows.append(("mixture_perfect", mixture_perfect(q)))
    rows.append(("lower_exponential", lower_bound("exponentialfinite", q)))
    w = q.w if q.w is not None else q.frac
    rows.append(("lower_asymptotic_exponential", asymptotic_exponential(w)))
    rows.append(("lower_asymptotic_heavy_tail", asymptotic_heavy_tail(w)))
    if q.rho is not None:
        e = q.error if q.error is not None else 0.0
        q2 = BoundQuery(q.n, q.B, q.w, q.rho, q.lam, e)
        rows.append(("lemma7", lemma7(q2)))
        rows.append(("lemma7_precise", lemma7(q2, precise=True)))
        if q.lam is not None:
            rows.append(("theorem8", theorem8(q2)))
    return rows
