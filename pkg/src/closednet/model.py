"""Network and environment specifications, environment path sampling and
monotonicity checks.

State indices are 0-based throughout the Python API. Station indices are
0-based as well; CSV/JSON outputs use 1-based column names (``q_1``...).
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import MonotonicityPrecondition, TimeOutOfRange, ValidationError, Violation

STOCHASTIC_TOL = 1e-12

HOLDING_KINDS = ("deterministic", "exponential", "erlang", "weibull", "replay")
DEPARTURE_FAMILIES = ("deterministic", "exponential", "erlang")


@dataclass(frozen=True)
class HoldingLaw:
    """Holding-time law of one environment state.

    ``replay`` consumes ``values`` in order, one per visit to the state; it is
    how a recorded realization is fed back as an exact test vector.
    """

    kind: str
    value: float = 1.0  # deterministic duration, or rate for exponential/erlang, or scale for weibull
    shape: float = 1.0
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in HOLDING_KINDS:
            raise ValueError(f"unknown holding kind {self.kind!r}")

    @classmethod
    def deterministic(cls, duration: float) -> "HoldingLaw":
        return cls("deterministic", value=float(duration))

    @classmethod
    def exponential(cls, rate: float) -> "HoldingLaw":
        return cls("exponential", value=float(rate))

    @classmethod
    def erlang(cls, shape: int, rate: float) -> "HoldingLaw":
        return cls("erlang", value=float(rate), shape=int(shape))

    @classmethod
    def weibull(cls, shape: float, scale: float) -> "HoldingLaw":
        return cls("weibull", value=float(scale), shape=float(shape))

    @classmethod
    def replay(cls, values: Sequence[float]) -> "HoldingLaw":
        return cls("replay", values=tuple(float(v) for v in values))

    def sample(self, rng: np.random.Generator, visit: int) -> float:
        if self.kind == "deterministic":
            return self.value
        if self.kind == "exponential":
            return float(rng.exponential(1.0 / self.value))
        if self.kind == "erlang":
            return float(rng.gamma(self.shape, 1.0 / self.value))
        if self.kind == "weibull":
            return float(self.value * rng.weibull(self.shape))
        if visit >= len(self.values):
            raise ValueError(f"replay holding law exhausted after {len(self.values)} visits")
        return self.values[visit]

    def mean(self) -> float:
        if self.kind == "deterministic":
            return self.value
        if self.kind == "exponential":
            return 1.0 / self.value
        if self.kind == "erlang":
            return self.shape / self.value
        if self.kind == "weibull":
            return self.value * math.gamma(1.0 + 1.0 / self.shape)
        return float(np.mean(self.values)) if self.values else math.nan

    def as_dict(self) -> dict:
        if self.kind == "deterministic":
            return {"kind": "deterministic", "value": self.value}
        if self.kind == "exponential":
            return {"kind": "exponential", "rate": self.value}
        if self.kind == "erlang":
            return {"kind": "erlang", "shape": int(self.shape), "rate": self.value}
        if self.kind == "weibull":
            return {"kind": "weibull", "shape": self.shape, "scale": self.value}
        return {"kind": "replay", "values": list(self.values)}


def _freeze_matrix(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EnvironmentSpec:
    """Finite semi-Markov environment.

    ``transition`` is the embedded jump chain. For a Markov environment build
    with :meth:`markov`, which keeps the rate matrix ``rates`` and derives the
    jump chain and exponential holding laws from it; an explicit ``holding``
    list may still override the holding laws (e.g. a replayed realization).
    A row of ``transition`` with ``P[i, i] == 1`` marks an absorbing state.

    ``lam[i]`` is the per-unit service rate at the server station in state i,
    ``routing[i, j]`` the probability of routing to client station j.
    """

    states: tuple[str, ...]
    transition: np.ndarray
    holding: tuple[HoldingLaw, ...]
    lam: np.ndarray
    routing: np.ndarray
    initial_state: int = 0
    rates: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        object.__setattr__(self, "transition", _freeze_matrix(self.transition))
        object.__setattr__(self, "lam", _freeze_matrix(self.lam))
        object.__setattr__(self, "routing", _freeze_matrix(self.routing))
        object.__setattr__(self, "holding", tuple(self.holding))
        if self.rates is not None:
            object.__setattr__(self, "rates", _freeze_matrix(self.rates))
        m = len(self.states)
        if self.transition.shape != (m, m):
            raise ValueError(f"transition must be {m}x{m}, got {self.transition.shape}")
        if self.lam.shape != (m,):
            raise ValueError(f"lambda must have {m} entries")
        if self.routing.ndim != 2 or self.routing.shape[0] != m:
            raise ValueError(f"routing must have {m} rows")
        if len(self.holding) != m:
            raise ValueError(f"holding must have {m} laws")
        if m and not 0 <= self.initial_state < m:
            raise ValueError("initial_state out of range")

    @classmethod
    def markov(cls, states, rates, lam, routing, initial_state=0, holding=None) -> "EnvironmentSpec":
        z = np.array(rates, dtype=float)
        z = z - np.diag(np.diag(z))
        out = z.sum(axis=1)
        m = len(states)
        transition = np.zeros((m, m))
        laws = []
        for i in range(m):
            if out[i] > 0:
                transition[i] = z[i] / out[i]
                laws.append(HoldingLaw.exponential(out[i]))
            else:
                transition[i, i] = 1.0
                laws.append(HoldingLaw.exponential(1.0))  # never sampled: absorbing
        if holding is not None:
            laws = list(holding)
        return cls(states, transition, tuple(laws), lam, routing, initial_state, rates=z)

    @property
    def m(self) -> int:
        return len(self.states)

    @property
    def k(self) -> int:
        return self.routing.shape[1]

    def station_rates(self, state: int) -> np.ndarray:
        """Per-unit rates lambda_j(E_i) = lambda(E_i) * p_j(E_i)."""
        return self.lam[state] * self.routing[state]

    def is_absorbing(self, state: int) -> bool:
        return self.transition[state, state] >= 1.0 - STOCHASTIC_TOL

    def with_initial_state(self, state: int) -> "EnvironmentSpec":
        return replace(self, initial_state=state)


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """k client stations with departure rates ``mu`` (inter-departure mean
    1/(mu_j N)) and initial normalized queue shares ``beta``."""

    k: int
    mu: np.ndarray
    beta: np.ndarray
    departure_family: str = "exponential"
    departure_shape: int = 2

    def __post_init__(self):
        object.__setattr__(self, "mu", _freeze_matrix(self.mu))
        object.__setattr__(self, "beta", _freeze_matrix(self.beta))
        if self.mu.shape != (self.k,) or self.beta.shape != (self.k,):
            raise ValueError(f"mu and beta must have k={self.k} entries")


@dataclass(frozen=True)
class CompletenessWarning:
    station: int

    def __str__(self):
        return f"station {self.station} receives no traffic in any environment state"


@dataclass(frozen=True, eq=False)
class ValidatedSpec:
    env: EnvironmentSpec
    net: NetworkSpec
    warnings: tuple[CompletenessWarning, ...] = ()


def validate_spec(env: EnvironmentSpec, net: NetworkSpec) -> ValidatedSpec:
    """Check every invariant of the pair and raise one ValidationError listing
    all violations. Completeness failures are returned as warnings."""
    problems: list[Violation] = []
    if env.m == 0:
        problems.append(Violation("EmptyStateSet", "environment has no states"))
    for i in range(env.m):
        row = env.transition[i]
        if np.any(row < 0) or abs(row.sum() - 1.0) > STOCHASTIC_TOL:
            problems.append(Violation("TransitionNotStochastic", f"transition row {i} sums to {row.sum():.15g}"))
        if not env.lam[i] > 0:
            problems.append(Violation("NonpositiveRate", f"lambda in state {i} is {env.lam[i]:g}"))
        p = env.routing[i]
        if np.any(p < 0) or abs(p.sum() - 1.0) > STOCHASTIC_TOL:
            problems.append(Violation("RoutingNotStochastic", f"routing row {i} sums to {p.sum():.15g}"))
        law = env.holding[i]
        if law.kind != "replay" and not (law.value > 0 and law.shape > 0):
            problems.append(Violation("NonpositiveRate", f"holding law parameters of state {i} must be positive"))
    if env.routing.shape[1] != net.k:
        problems.append(Violation("ShapeMismatch", f"routing has {env.routing.shape[1]} stations, network has {net.k}"))
    for j in range(net.k):
        if not net.mu[j] > 0:
            problems.append(Violation("NonpositiveRate", f"mu of station {j} is {net.mu[j]:g}"))
        if net.beta[j] < 0:
            problems.append(Violation("NegativeBeta", f"beta of station {j} is {net.beta[j]:g}"))
    if net.beta.sum() > 1.0 + STOCHASTIC_TOL:
        problems.append(Violation("BetaOverflow", f"initial shares sum to {net.beta.sum():.15g} > 1"))
    if net.departure_family not in DEPARTURE_FAMILIES:
        problems.append(Violation("UnsupportedFamily", f"departure family {net.departure_family!r}"))
    if problems:
        raise ValidationError(problems)
    warnings = tuple(
        CompletenessWarning(j) for j in range(net.k) if not np.any(env.routing[:, j] > 0)
    )
    return ValidatedSpec(env, net, warnings)


@dataclass(frozen=True)
class EnvironmentPath:
    """Right-continuous step path: ``states[l]`` holds on ``[jumps[l], jumps[l+1])``."""

    jumps: tuple[float, ...]
    states: tuple[int, ...]
    horizon: float

    def __post_init__(self):
        if len(self.jumps) != len(self.states) or not self.jumps or self.jumps[0] != 0.0:
            raise ValueError("path needs jumps starting at 0 and one state per interval")
        if any(b <= a for a, b in zip(self.jumps, self.jumps[1:])):
            raise ValueError("jump times must be strictly increasing")
        if self.jumps[-1] > self.horizon:
            raise ValueError("jump beyond horizon")

    def intervals(self):
        """Yield ``(start, end, state)`` covering ``[0, horizon]``."""
        ends = self.jumps[1:] + (self.horizon,)
        for start, end, s in zip(self.jumps, ends, self.states):
            if end > start:
                yield start, end, s

    def truncated(self, horizon: float) -> "EnvironmentPath":
        n = bisect.bisect_right(self.jumps, horizon)
        return EnvironmentPath(self.jumps[:n], self.states[:n], horizon)


def state_at(path: EnvironmentPath, t: float) -> int:
    if not 0.0 <= t <= path.horizon:
        raise TimeOutOfRange(f"t={t} outside [0, {path.horizon}]")
    return path.states[bisect.bisect_right(path.jumps, t) - 1]


def _simulate_jumps(env: EnvironmentSpec, rng: np.random.Generator, horizon: float, initial: int):
    jumps = [0.0]
    states = [initial]
    visits = [0] * env.m
    t = 0.0
    s = initial
    while not env.is_absorbing(s):
        d = env.holding[s].sample(rng, visits[s])
        visits[s] += 1
        t = t + d
        if t > horizon:
            break
        nxt = int(rng.choice(env.m, p=env.transition[s]))
        if nxt != s:
            jumps.append(t)
            states.append(nxt)
        s = nxt
    return jumps, states


def sample_environment_path(env: EnvironmentSpec, seed: int, horizon: float) -> EnvironmentPath:
    """Sample one environment realization on ``[0, horizon]``; a pure function
    of ``(env, seed, horizon)``."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    rng = np.random.default_rng(seed)
    jumps, states = _simulate_jumps(env, rng, horizon, env.initial_state)
    return EnvironmentPath(tuple(jumps), tuple(states), float(horizon))


@dataclass(frozen=True)
class MonotonicityReport:
    property1_holds: Optional[bool]  # None when no rate matrix is available
    property2_holds: bool
    violations: tuple[tuple[int, int, Optional[int]], ...] = ()

    @property
    def holds(self) -> bool:
        return self.property2_holds and self.property1_holds is not False


def check_monotone(env: EnvironmentSpec) -> MonotonicityReport:
    """Check z[l, m] >= z[m, l] and lambda_j(E_l) <= lambda_j(E_m) for all l < m.

    Violations of the first property are reported with station ``None``.
    """
    violations = []
    p1: Optional[bool] = None
    if env.rates is not None:
        p1 = True
        for l in range(env.m):
            for m in range(l + 1, env.m):
                if env.rates[l, m] < env.rates[m, l]:
                    p1 = False
                    violations.append((l, m, None))
    p2 = True
    rates = env.lam[:, None] * env.routing
    for l in range(env.m):
        for m in range(l + 1, env.m):
            for j in range(env.k):
                if rates[l, j] > rates[m, j]:
                    p2 = False
                    violations.append((l, m, j))
    return MonotonicityReport(p1, p2, tuple(violations))


@dataclass(frozen=True)
class OrderingReport:
    t: float
    cdf_a: np.ndarray
    cdf_b: np.ndarray
    dominance: bool
    max_violation: float  # max over states of cdf_b - cdf_a (negative is good)


def empirical_state_ordering(
    env: EnvironmentSpec,
    t: float,
    init_a: int,
    init_b: int,
    reps: int,
    seed: int,
    z: float = 3.0,
) -> OrderingReport:
    """Empirical CDFs of the state index at time t from two initial states.

    Both arms share the seed (common random numbers). The dominance flag
    allows ``z`` standard errors of sampling noise when comparing the CDFs.
    """
    report = check_monotone(env)
    if not report.holds:
        raise MonotonicityPrecondition(f"environment is not monotone: {report.violations}")
    if init_a > init_b:
        raise MonotonicityPrecondition("init_a must not exceed init_b")

    def cdf(init: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        counts = np.zeros(env.m)
        for _ in range(reps):
            jumps, states = _simulate_jumps(env, rng, t, init)
            counts[states[bisect.bisect_right(jumps, t) - 1]] += 1
        return np.cumsum(counts) / reps

    ca, cb = cdf(init_a), cdf(init_b)
    se = np.sqrt((ca * (1 - ca) + cb * (1 - cb)) / reps)
    gap = cb - ca
    return OrderingReport(t, ca, cb, bool(np.all(gap <= z * se + 1e-12)), float(gap.max()))
