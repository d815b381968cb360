"""Limiting normalized queue trajectories.

Three solver modes are available for a constant environment:

``scheme``
    the recursive zero-hitting procedure in its literal form, with the
    idle-fraction factor applied to both the drift and the integral term;
``example``
    the same recursion with the integral term carrying the relative rate
    only, which is the variant the worked numerical example satisfies;
``ode``
    fixed-step RK4 on the reflected differential equation
    ``dq_j/dt = lambda_j (1 - sum q) - mu_j``.

The modes coincide when every station starts empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate

from .errors import GridNotIncreasing
from .model import EnvironmentPath, EnvironmentSpec, NetworkSpec

MODES = ("scheme", "example", "ode")
ZERO_TOL = 1e-12
TIE_TOL = 1e-9
ROOT_TOL = 1e-12


# ---------------------------------------------------------------- classification


@dataclass(frozen=True)
class Classification:
    rho: np.ndarray
    relative_rate: np.ndarray
    idle_fraction: float
    locally_bottleneck: np.ndarray
    absolutely_bottleneck: np.ndarray


def classify(station_rates, mu, q) -> Classification:
    """Local and absolute bottleneck flags.

    ``station_rates`` are the per-unit rates lambda_j(E) of the current
    environment state; the relative rate scales them by the fraction of units
    still at the server. A load of exactly 1 counts as locally bottleneck.
    """
    lam = np.asarray(station_rates, dtype=float)
    mu = np.asarray(mu, dtype=float)
    q = np.asarray(q, dtype=float)
    alpha = 1.0 - float(q.sum())
    rel = lam * alpha
    rho = rel / mu
    return Classification(rho, rel, alpha, rho >= 1.0, lam >= mu)


# ---------------------------------------------------------------- reflection


def skorokhod_reflect(t, x) -> np.ndarray:
    """Normal reflection at zero: ``x(t) - min(0, min_{s<=t} x(s))``."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if t.shape != x.shape[:1]:
        raise ValueError("grid and samples differ in length")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise GridNotIncreasing("sample grid must be strictly increasing")
    if x.size and x[0] != 0.0:
        raise ValueError("reflected path must start at 0")
    running = np.minimum.accumulate(x, axis=0)
    return x - np.minimum(running, 0.0)


# ---------------------------------------------------------------- roots of a + b s + c exp(-d s)


def _eval(a, b, c, d, s):
    return a + b * s + c * math.exp(-d * s)


def _slope(a, b, c, d, s):
    return b - c * d * math.exp(-d * s)


def monotone_pieces(b, c, d, lo, hi) -> list[float]:
    """Split ``[lo, hi]`` at the critical point of ``a + b s + c exp(-d s)``."""
    cuts = [lo]
    cd = c * d
    if d > 0 and cd != 0:
        ratio = b / cd
        if ratio > 0:
            crit = -math.log(ratio) / d
            if lo < crit < hi:
                cuts.append(crit)
    cuts.append(hi)
    return cuts


def _bisect(a, b, c, d, lo, hi):
    # invariant: f(lo) > 0 >= f(hi)
    for _ in range(200):
        if hi - lo <= ROOT_TOL:
            break
        mid = 0.5 * (lo + hi)
        if _eval(a, b, c, d, mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def zero_hit_time(a, b, c, d, window, strict=False) -> Optional[float]:
    """Earliest ``s`` in ``window`` with ``a + b s + c exp(-d s) <= 0``.

    The function has at most one critical point, so the window splits into at
    most two monotone pieces, each searched by bisection. With ``strict`` the
    value must become negative: a start at exactly zero only counts if the
    curve leaves zero downwards, and an identically-zero curve never hits.
    """
    a, b, c, d = float(a), float(b), float(c), float(d)
    lo, hi = float(window[0]), float(window[1])
    if hi < lo:
        return None
    cuts = monotone_pieces(b, c, d, lo, hi)
    for u, v in zip(cuts, cuts[1:]):
        fu, fv = _eval(a, b, c, d, u), _eval(a, b, c, d, v)
        if strict:
            if fu < -ZERO_TOL:
                return u
            if fu <= ZERO_TOL:
                # at zero: a hit only if the piece leaves zero downwards
                sl = _slope(a, b, c, d, u)
                if sl < -ZERO_TOL or (sl <= ZERO_TOL and fv < -ZERO_TOL):
                    return u
                continue
            if fv < -ZERO_TOL:
                return _bisect(a, b, c, d, u, v)
        else:
            if fu <= 0:
                return u
            if fv <= 0:
                return _bisect(a, b, c, d, u, v)
    return None


# ---------------------------------------------------------------- trajectory types


@dataclass(frozen=True, eq=False)
class FluidSegment:
    """One piece of a trajectory.

    Closed-form pieces carry per-station coefficients of
    ``a + b (t - t_start) + c exp(-d (t - t_start))``; stations flagged in
    ``frozen`` are identically zero. ODE pieces carry a dense sample grid.
    """

    t_start: float
    t_end: float
    mode: str
    state: Optional[int]
    frozen: np.ndarray
    a: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None
    times: Optional[np.ndarray] = None
    samples: Optional[np.ndarray] = None
    pinned: Optional[np.ndarray] = None
    regulator: Optional[np.ndarray] = None

    @property
    def closed_form(self) -> bool:
        return self.times is None

    def raw(self, t: float) -> np.ndarray:
        """Unreflected closed form, also valid past ``t_end``."""
        s = t - self.t_start
        out = self.a + self.b * s + self.c * np.exp(-self.d * s)
        return np.where(self.frozen, 0.0, out)

    def values(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.closed_form:
            s = (ts - self.t_start)[:, None]
            out = self.a + self.b * s + self.c * np.exp(-self.d * s)
            out = np.where(self.frozen[None, :], 0.0, out)
            return np.maximum(out, 0.0)
        return np.column_stack(
            [np.interp(ts, self.times, self.samples[:, j]) for j in range(self.samples.shape[1])]
        )

    def frozen_at(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.closed_form:
            return np.broadcast_to(self.frozen, (ts.size, self.frozen.size)).copy()
        idx = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, len(self.times) - 1)
        return self.pinned[idx]


@dataclass(frozen=True)
class TauEvent:
    t: float
    station: int


@dataclass(frozen=True, eq=False)
class FluidTrajectory:
    segments: tuple[FluidSegment, ...]
    tau_events: tuple[TauEvent, ...]
    env_jumps: tuple[float, ...]
    k: int
    horizon: float
    mode: str

    @property
    def t_start(self) -> float:
        return self.segments[0].t_start

    def _segment_index(self, ts: np.ndarray) -> np.ndarray:
        starts = np.array([s.t_start for s in self.segments])
        return np.clip(np.searchsorted(starts, ts, side="right") - 1, 0, len(self.segments) - 1)

    def values(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.empty((ts.size, self.k))
        idx = self._segment_index(ts)
        for i in np.unique(idx):
            sel = idx == i
            out[sel] = self.segments[i].values(ts[sel])
        return out

    def value(self, t: float) -> np.ndarray:
        return self.values([t])[0]

    def frozen_mask(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.zeros((ts.size, self.k), dtype=bool)
        idx = self._segment_index(ts)
        for i in np.unique(idx):
            sel = idx == i
            out[sel] = self.segments[i].frozen_at(ts[sel])
        return out

    def states(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        idx = self._segment_index(ts)
        return np.array([self.segments[i].state if self.segments[i].state is not None else -1 for i in idx])

    def sample(self, step: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
        n = int(round((self.horizon - self.t_start) / step))
        grid = self.t_start + step * np.arange(n + 1)
        grid[-1] = min(grid[-1], self.horizon)
        return grid, self.values(grid)


# ---------------------------------------------------------------- constant environment


def _coefficients(lam0, mu, x, active, alpha, kappa):
    k = len(mu)
    a, b, c, d = np.zeros(k), np.zeros(k), np.zeros(k), np.zeros(k)
    total_lam = float(lam0[active].sum())
    total_mu = float(mu[active].sum())
    # below this the exponential form overflows; its limit is the linear drain
    # with error of order total_lam * total_mu * s^2
    if total_lam > 1e-12 * max(1.0, total_mu):
        zinf = (total_lam - total_mu) / total_lam
        c[active] = -kappa * lam0[active] * zinf / total_lam
        a[active] = x[active] - c[active]
        b[active] = alpha * (lam0[active] - mu[active]) - kappa * lam0[active] * zinf
        d[active] = total_lam
    else:
        # no (or negligible) inflow: pure linear drain
        a[active] = x[active]
        b[active] = alpha * (lam0[active] - mu[active])
    return a, b, c, d


def _closed_form_run(lam_ind, mu, x0, duration, mode, t0, state):
    k = len(mu)
    x = np.maximum(np.array(x0, dtype=float), 0.0)
    frozen = np.zeros(k, dtype=bool)
    segments: list[FluidSegment] = []
    taus: list[TauEvent] = []
    t = 0.0
    while True:
        alpha = 1.0 - float(x.sum())
        lam0 = lam_ind * alpha
        kappa = alpha if mode == "scheme" else 1.0
        while True:
            active = ~frozen
            a, b, c, d = _coefficients(lam0, mu, x, active, alpha, kappa)
            hits = {}
            for j in np.flatnonzero(active):
                s = zero_hit_time(a[j], b[j], c[j], d[j], (0.0, duration - t), strict=x[j] <= ZERO_TOL)
                if s is not None:
                    hits[j] = s
            instant = [j for j, s in hits.items() if s <= 0.0]
            if not instant:
                break
            for j in instant:
                frozen[j] = True
                x[j] = 0.0
                taus.append(TauEvent(t0 + t, int(j)))
        s_min = min(hits.values()) if hits else None
        end = duration if s_min is None or t + s_min >= duration else t + s_min
        segments.append(FluidSegment(t0 + t, t0 + end, mode, state, frozen.copy(), a, b, c, d))
        if end >= duration:
            break
        tied = [j for j, s in hits.items() if s - s_min < TIE_TOL]
        x = np.where(frozen, 0.0, np.maximum(a + b * s_min + c * np.exp(-d * s_min), 0.0))
        for j in tied:
            x[j] = 0.0
            frozen[j] = True
            taus.append(TauEvent(t0 + t + s_min, int(j)))
        t = end
    return segments, taus


def _ode_run(lam_ind, mu, x0, duration, t0, state):
    k = len(mu)
    n = max(10_000, math.ceil(duration * 1e4 - 1e-9))
    h = duration / n
    lam = [float(v) for v in lam_ind]
    mus = [float(v) for v in mu]
    q = [max(float(v), 0.0) for v in x0]
    samples = np.empty((n + 1, k))
    pinned = np.zeros((n + 1, k), dtype=bool)
    regulator = np.zeros((n, k))
    taus: list[TauEvent] = []
    rng_k = range(k)

    def field(y):
        u = 1.0 - sum(y)
        out = [0.0] * k
        push = [0.0] * k
        for j in rng_k:
            dr = lam[j] * u - mus[j]
            if y[j] <= 0.0 and dr < 0.0:
                push[j] = -dr
                dr = 0.0
            out[j] = dr
        return out, push

    def is_pinned(y):
        u = 1.0 - sum(y)
        return [y[j] <= 0.0 and lam[j] * u - mus[j] < 0.0 for j in rng_k]

    samples[0] = q
    pinned[0] = is_pinned(q)
    for j in rng_k:
        if pinned[0, j]:
            taus.append(TauEvent(t0, j))
    half = 0.5 * h
    for i in range(n):
        k1, p1 = field(q)
        k2, p2 = field([q[j] + half * k1[j] for j in rng_k])
        k3, p3 = field([q[j] + half * k2[j] for j in rng_k])
        k4, p4 = field([q[j] + h * k3[j] for j in rng_k])
        new = [q[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) for j in rng_k]
        for j in rng_k:
            reg = h / 6.0 * (p1[j] + 2.0 * p2[j] + 2.0 * p3[j] + p4[j])
            if new[j] < 0.0:
                if q[j] > 0.0:
                    # locate the crossing from the ungated slope at the step start
                    frac = min(1.0, q[j] / (h * -k1[j])) if k1[j] < 0.0 else q[j] / (q[j] - new[j])
                    taus.append(TauEvent(t0 + (i + frac) * h, j))
                reg -= new[j]
                new[j] = 0.0
            regulator[i, j] = reg
        q = new
        samples[i + 1] = q
        pinned[i + 1] = is_pinned(q)
    times = t0 + h * np.arange(n + 1)
    times[-1] = t0 + duration
    seg = FluidSegment(
        t0, t0 + duration, "ode", state, pinned[-1].copy(),
        times=times, samples=samples, pinned=pinned, regulator=regulator,
    )
    return [seg], taus


def solve_constant_env(
    lam_ind: Sequence[float],
    mu: Sequence[float],
    x0: Sequence[float],
    duration: float,
    mode: str = "example",
    t0: float = 0.0,
    state: Optional[int] = None,
) -> FluidTrajectory:
    """Fluid trajectory over ``[t0, t0 + duration]`` with fixed per-unit rates
    ``lam_ind`` (lambda_j of the current environment state)."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not duration > 0:
        raise ValueError("duration must be positive")
    lam_ind = np.asarray(lam_ind, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if mode == "ode":
        segments, taus = _ode_run(lam_ind, mu, x0, duration, t0, state)
    else:
        segments, taus = _closed_form_run(lam_ind, mu, x0, duration, mode, t0, state)
    return FluidTrajectory(tuple(segments), tuple(taus), (t0,), len(mu), t0 + duration, mode)


def solve_semi_markov(
    env: EnvironmentSpec,
    path: EnvironmentPath,
    net: NetworkSpec,
    mode: str = "example",
) -> FluidTrajectory:
    """Chain constant-environment solves over the intervals of ``path``.

    Terminal shares of one interval seed the next; freezing never carries
    across a jump, so every station is re-examined with the new rates.
    """
    segments: list[FluidSegment] = []
    taus: list[TauEvent] = []
    x = np.array(net.beta, dtype=float)
    for start, end, s in path.intervals():
        part = solve_constant_env(env.station_rates(s), net.mu, x, end - start, mode, t0=start, state=s)
        segments.extend(part.segments)
        taus.extend(part.tau_events)
        x = part.segments[-1].values([end])[0]
    return FluidTrajectory(tuple(segments), tuple(taus), tuple(path.jumps), net.k, path.horizon, mode)


# ---------------------------------------------------------------- bottleneck groups


@dataclass(frozen=True)
class GroupShare:
    """Cumulative share of a bottleneck group started empty:
    ``(1 - M/L)(1 - exp(-L s))``, or ``-M s`` when ``L == 0``."""

    lam_sum: float
    mu_sum: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.lam_sum > 0:
            return (1.0 - self.mu_sum / self.lam_sum) * (1.0 - np.exp(-self.lam_sum * s))
        return -self.mu_sum * s

    def integral(self, t):
        t = np.asarray(t, dtype=float)
        if self.lam_sum > 0:
            level = 1.0 - self.mu_sum / self.lam_sum
            return level * (t - (1.0 - np.exp(-self.lam_sum * t)) / self.lam_sum)
        return -0.5 * self.mu_sum * t * t


def bottleneck_group(lambdas, mus) -> GroupShare:
    return GroupShare(float(np.sum(lambdas)), float(np.sum(mus)))


def aggregate_bottleneck_share(lambdas, mus, beta_total, t):
    """Total share held by a bottleneck group, ``beta + (1 - beta) r(t)``."""
    r = bottleneck_group(lambdas, mus)(t)
    return beta_total + (1.0 - beta_total) * r


def station_queue_share(
    lam_v: float,
    mu_v: float,
    share: Union[GroupShare, Callable[[float], float]],
    t: float,
    beta_v: float = 0.0,
    beta_total: float = 0.0,
) -> float:
    """Share of one bottleneck station given its group's share ``share``.

    A :class:`GroupShare` is integrated in closed form; any other callable is
    integrated numerically.
    """
    if isinstance(share, GroupShare):
        area = float(share.integral(t))
    else:
        area = integrate.quad(lambda s: float(share(s)), 0.0, t, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return beta_v + (1.0 - beta_total) * ((lam_v - mu_v) * t - lam_v * area)
