"""Confidence interval for a symmetric network whose client stations fail.

All k stations share lifetime law G, server rate lambda and client rate mu.
Stations start non-bottleneck (lambda < k mu) and the last survivor is a
bottleneck (lambda > mu); only the case where a single survivor is needed
to bottleneck (``max_bottleneck_count == 1``) is solved.

Two conventions exist for the lifetime law at negative arguments, which
appear once the time axis is shifted by ``t_gamma``:

``continued``
    the closed-form survival function is used as written, so an
    exponential survival ``exp(-r x)`` exceeds 1 for ``x < 0``. This is the
    reading under which the ratio for k=2, G exponential(r) collapses to
    ``exp(-r t_gamma)``;
``truncated``
    ``G(x) = 0`` for ``x < 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import InfeasibleConfidence, NotBottleneck, UnsupportedL0

LIFETIME_FAMILIES = ("exponential", "erlang", "weibull")
CONVENTIONS = ("continued", "truncated")
TAIL = 1e-12


@dataclass(frozen=True)
class Lifetime:
    family: str
    rate: float = 1.0  # exponential / erlang rate
    shape: float = 1.0  # erlang (integer) / weibull shape
    scale: float = 1.0  # weibull scale

    def __post_init__(self):
        if self.family not in LIFETIME_FAMILIES:
            raise ValueError(f"unknown lifetime family {self.family!r}")

    @classmethod
    def exponential(cls, rate: float) -> "Lifetime":
        return cls("exponential", rate=float(rate))

    @classmethod
    def erlang(cls, shape: int, rate: float) -> "Lifetime":
        return cls("erlang", rate=float(rate), shape=int(shape))

    @classmethod
    def weibull(cls, shape: float, scale: float) -> "Lifetime":
        return cls("weibull", shape=float(shape), scale=float(scale))

    def _formula_survival(self, x):
        if self.family == "exponential":
            return math.exp(-self.rate * x)
        if self.family == "erlang":
            rx = self.rate * x
            return math.exp(-rx) * sum(rx**n / math.factorial(n) for n in range(int(self.shape)))
        return math.exp(-((x / self.scale) ** self.shape))

    def survival(self, x: float) -> float:
        """1 - G(x), with G(x) = 0 for x < 0."""
        if x <= 0:
            return 1.0
        return self._formula_survival(x)

    def survival_continued(self, x: float) -> float:
        """Closed-form survival evaluated at negative arguments too.

        The Weibull form has no real continuation and is clamped to 1.
        """
        if x < 0 and self.family == "weibull":
            return 1.0
        return self._formula_survival(x)

    def cdf(self, x: float) -> float:
        return 1.0 - self.survival(x)

    def quantile(self, p: float) -> float:
        if self.family == "exponential":
            return -math.log1p(-p) / self.rate
        if self.family == "erlang":
            return float(special.gammaincinv(self.shape, p)) / self.rate
        return self.scale * (-math.log1p(-p)) ** (1.0 / self.shape)

    def tail_cutoff(self) -> float:
        """Point beyond which the survival function is below 1e-12."""
        if self.family == "exponential":
            return -math.log(TAIL) / self.rate
        if self.family == "erlang":
            return float(stats.gamma.isf(TAIL, self.shape, scale=1.0 / self.rate))
        return self.scale * (-math.log(TAIL)) ** (1.0 / self.shape)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.family == "exponential":
            return rng.exponential(1.0 / self.rate, size)
        if self.family == "erlang":
            return rng.gamma(self.shape, 1.0 / self.rate, size)
        return self.scale * rng.weibull(self.shape, size)

    def as_dict(self) -> dict:
        if self.family == "exponential":
            return {"family": "exponential", "rate": self.rate}
        if self.family == "erlang":
            return {"family": "erlang", "shape": int(self.shape), "rate": self.rate}
        return {"family": "weibull", "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class ReliabilitySpec:
    lam: float
    mu: float
    k: int
    alpha: float
    P: float
    G: Lifetime

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0 and self.k >= 2):
            raise ValueError("lambda, mu must be positive and k >= 2")
        if not self.lam / (self.k * self.mu) < 1:
            raise ValueError("stations must start non-bottleneck: lambda / (k mu) < 1")
        if not self.lam / self.mu > 1:
            raise ValueError("the last station must be a bottleneck: lambda / mu > 1")
        if not 0 < self.P < 1:
            raise ValueError("confidence level P must lie in (0, 1)")
        if not 0 < self.alpha < 1:
            raise ValueError("risk threshold alpha must lie in (0, 1)")


@dataclass(frozen=True)
class ConfidenceResult:
    t_gamma: float
    gamma: float
    branch: str  # "gamma<=alpha" or "gamma>alpha"
    theta_offset: float  # theta - tau_{k-1}
    t_alpha: float
    residual: float

    def as_dict(self) -> dict:
        return {
            "t_gamma": self.t_gamma,
            "gamma": self.gamma,
            "branch": self.branch,
            "theta_offset": self.theta_offset,
            "t_alpha": self.t_alpha,
            "residual": self.residual,
        }


def max_bottleneck_count(lam: float, mu: float) -> int:
    """Largest l >= 1 with lambda / (l mu) > 1, or 0."""
    if not (lam > 0 and mu > 0):
        raise ValueError("rates must be positive")
    l = 0
    while lam / ((l + 1) * mu) > 1:
        l += 1
    return l


def post_failure_share(lam: float, mu: float, t):
    """Share in the last surviving station, ``t`` after the previous failure.

    ``(lambda - mu) t - lambda * int_0^t r`` with
    ``r(s) = (1 - mu/lambda)(1 - exp(-lambda s))``, which integrates to
    ``(1 - mu/lambda)(1 - exp(-lambda t))``.
    """
    if not lam > mu:
        raise NotBottleneck(f"lambda={lam} must exceed mu={mu}")
    t = np.asarray(t, dtype=float)
    q = (1.0 - mu / lam) * -np.expm1(-lam * t)
    q = np.minimum(q, 1.0)
    return float(q) if q.ndim == 0 else q


def share_inverse(lam: float, mu: float, level: float) -> float:
    """Time at which ``post_failure_share`` reaches ``level``; inf if never."""
    limit = 1.0 - mu / lam
    if level <= 0:
        return 0.0
    if level >= limit:
        return math.inf
    return -math.log1p(-level / limit) / lam


def _binomial_tail(n: int, i_min: int, s: float) -> float:
    g = 1.0 - s
    return sum(comb(n, i) * s**i * g ** (n - i) for i in range(i_min, n + 1))


def risk_probabilities(spec: ReliabilitySpec, t: float, t_gamma: float) -> tuple[float, float]:
    """``(P{q(t) = 0}, P{q(t) <= gamma})`` for ``gamma = post_failure_share(t_gamma)``.

    The second value is the product form: the first station survives to t
    and at least one of the other k-1 survives to ``t - t_gamma``.
    """
    S = spec.G.survival
    p_zero = _binomial_tail(spec.k, 2, S(t))
    p_le = S(t) * _binomial_tail(spec.k - 1, 1, S(t - t_gamma))
    return p_zero, p_le


def _quad(f, a, b) -> float:
    return integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-12, limit=400)[0]


def confidence_ratio(spec: ReliabilitySpec, t_gamma: float, convention: str = "continued") -> float:
    """Ratio of integrals whose root in ``t_gamma`` gives the confidence horizon."""
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    G = spec.G
    shifted = G.survival_continued if convention == "continued" else G.survival
    k = spec.k

    def numerator(t):
        return G.survival(t) * _binomial_tail(k - 1, 1, shifted(t - t_gamma))

    def denominator(t):
        return _binomial_tail(k, 2, shifted(t - t_gamma))

    upper = t_gamma + G.tail_cutoff()
    num = _quad(numerator, 0.0, t_gamma) + _quad(numerator, t_gamma, upper)
    den = _quad(denominator, 0.0, t_gamma) + _quad(denominator, t_gamma, upper)
    return num / den


def solve_confidence(spec: ReliabilitySpec, convention: str = "continued") -> ConfidenceResult:
    """Solve for ``t_gamma`` by bracketing the ratio, then apply the theta rule:
    offset ``t_gamma`` if ``gamma <= alpha``, else the time ``t_alpha`` when the
    share reaches ``alpha``."""
    l0 = max_bottleneck_count(spec.lam, spec.mu)
    if l0 != 1:
        raise UnsupportedL0(f"only a single bottleneck survivor is supported, got l0={l0}")
    top = spec.G.quantile(1.0 - 1e-9)
    # geometric scan from 0 up to the bracket top; bracket the first crossing of P
    grid = np.concatenate([[0.0], top * 2.0 ** -np.arange(40, -1, -1)])
    values = [confidence_ratio(spec, 0.0, convention)]
    if values[0] < spec.P:
        raise InfeasibleConfidence(f"ratio at t_gamma=0 is {values[0]:.6g} < P={spec.P}")
    lo = hi = None
    for i in range(1, grid.size):
        values.append(confidence_ratio(spec, grid[i], convention))
        if values[i] > values[i - 1] + 1e-10:
            raise InfeasibleConfidence(f"ratio increases in t_gamma near {grid[i]:.6g}; monotone bracket unavailable")
        if values[i] <= spec.P:
            lo, hi = grid[i - 1], grid[i]
            break
    if hi is None:
        raise InfeasibleConfidence(f"ratio stays above P={spec.P} on [0, {top:g}]")
    t_gamma = optimize.brentq(
        lambda x: confidence_ratio(spec, x, convention) - spec.P, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps
    )
    gamma = post_failure_share(spec.lam, spec.mu, t_gamma)
    t_alpha = share_inverse(spec.lam, spec.mu, spec.alpha)
    if gamma <= spec.alpha:
        branch, offset = "gamma<=alpha", t_gamma
    else:
        branch, offset = "gamma>alpha", t_alpha
    residual = confidence_ratio(spec, t_gamma, convention) - spec.P
    return ConfidenceResult(t_gamma, gamma, branch, offset, t_alpha, residual)


def analytic_t_gamma_exponential(rate: float, P: float) -> float:
    """Closed form for k=2 and exponential lifetimes: ratio = exp(-rate t)."""
    return -math.log(P) / rate
