"""Discrete-event simulation of the finite-N network.

The server station is an infinite-server queue: every unit there completes
service at rate lambda(E(t)) and is routed to client station j with
probability p_j(E(t)). Client stations serve autonomously: station j sends one
unit back at each point of its own renewal process S_j (mean gap 1/(mu_j N)),
and a point that finds the queue empty is lost.
"""

from __future__ import annotations

import heapq
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NoDeparturesBefore, UnsupportedFamily
from .model import DEPARTURE_FAMILIES, EnvironmentPath, EnvironmentSpec, NetworkSpec

_CHUNK = 1 << 14


class DepartureProcess:
    """Renewal point process with i.i.d. gaps of mean ``1 / rate``."""

    def __init__(self, family: str, rate: float, rng: np.random.Generator, shape: int = 2):
        if family not in DEPARTURE_FAMILIES:
            raise UnsupportedFamily(f"departure family {family!r}")
        if not rate > 0:
            raise ValueError("departure rate must be positive")
        self.family = family
        self.rate = float(rate)
        self.shape = int(shape)
        self._rng = rng

    def _gaps(self, n: int) -> np.ndarray:
        if self.family == "exponential":
            return self._rng.exponential(1.0 / self.rate, n)
        return self._rng.gamma(self.shape, 1.0 / (self.shape * self.rate), n)

    def points(self, horizon: float) -> np.ndarray:
        """All points in ``(0, horizon]``."""
        if self.family == "deterministic":
            # i / rate rather than a running sum keeps the points exact
            n = int(math.floor(horizon * self.rate)) + 1
            pts = np.arange(1, n + 1) / self.rate
            return pts[pts <= horizon]
        chunks = []
        last = 0.0
        expected = int(horizon * self.rate * 1.1) + 16
        while last <= horizon:
            pts = last + np.cumsum(self._gaps(expected))
            chunks.append(pts)
            last = pts[-1]
            expected = max(16, expected // 4)
        pts = np.concatenate(chunks)
        return pts[pts <= horizon]

    def __iter__(self):
        if self.family == "deterministic":
            i = 1
            while True:
                yield i / self.rate
                i += 1
        last = 0.0
        while True:
            for g in self._gaps(_CHUNK):
                last += g
                yield float(last)


def make_departure_process(family: str, rate: float, seed, shape: int = 2) -> DepartureProcess:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return DepartureProcess(family, rate, rng, shape)


@dataclass(frozen=True)
class SimConfig:
    N: int
    seed: int = 0
    sample_grid: Optional[np.ndarray] = None  # default: step 1e-3 over the path horizon
    replications: int = 1
    record_events: bool = False
    workers: Optional[int] = None  # default: CLOSEDNET_THREADS or 1

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")


@dataclass
class Replication:
    queues: np.ndarray  # (len(grid), k) ints
    server: np.ndarray  # (len(grid),)
    departure_times: list  # per station: all points of S_j in (0, horizon]
    departure_seen: list  # per station: queue length just before each point
    event_counts: dict
    events: Optional[list] = None  # (t, kind, queues tuple, server) after every event


@dataclass
class SimulationResult:
    N: int
    grid: np.ndarray
    replications: list[Replication]
    seeds: list[int] = field(default_factory=list)

    @property
    def queues(self) -> np.ndarray:
        """(reps, len(grid), k) array of raw queue lengths."""
        return np.stack([r.queues for r in self.replications])

    @property
    def server(self) -> np.ndarray:
        return np.stack([r.server for r in self.replications])


def replication_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(i)]).generate_state(1)[0])


def _run_replication(env, path, net, N, grid, seed, record_events):
    rng = np.random.default_rng(seed)
    k = net.k
    horizon = path.horizon
    queues = [int(math.floor(b * N)) for b in net.beta]
    n_server = N - sum(queues)

    dep_times = []
    for j in range(k):
        proc = DepartureProcess(net.departure_family, net.mu[j] * N, rng, net.departure_shape)
        dep_times.append(proc.points(horizon))
    dep_seen = [np.zeros(len(p), dtype=np.int64) for p in dep_times]
    dep_lists = [p.tolist() for p in dep_times]
    dep_idx = [0] * k
    heap = [(dep_lists[j][0], j) for j in range(k) if dep_lists[j]]
    heapq.heapify(heap)

    jumps = list(path.jumps[1:])
    jump_states = list(path.states[1:])
    ji = 0
    state = path.states[0]
    lam_state = [float(v) for v in env.lam]
    cum_routing = [np.cumsum(env.routing[s]).tolist() for s in range(env.m)]

    grid_list = grid.tolist()
    n_grid = len(grid_list)
    gi = 0
    q_rec = np.zeros((n_grid, k), dtype=np.int64)
    s_rec = np.zeros(n_grid, dtype=np.int64)
    counts = {"arrival": 0, "departure": 0, "lost": 0, "jump": 0}
    events = [] if record_events else None

    exp_buf = rng.standard_exponential(_CHUNK).tolist()
    uni_buf = rng.random(_CHUNK).tolist()
    ei = ui = 0
    inf = math.inf
    t = 0.0

    while True:
        t_jump = jumps[ji] if ji < len(jumps) else inf
        t_dep = heap[0][0] if heap else inf
        rate = lam_state[state] * n_server
        if rate > 0.0:
            if ei == _CHUNK:
                exp_buf = rng.standard_exponential(_CHUNK).tolist()
                ei = 0
            t_arr = t + exp_buf[ei] / rate
            ei += 1
        else:
            t_arr = inf
        # ties: environment jump, then departure, then arrival
        if t_jump <= t_dep and t_jump <= t_arr:
            te, kind = t_jump, 0
        elif t_dep <= t_arr:
            te, kind = t_dep, 1
        else:
            te, kind = t_arr, 2
        if te > horizon:
            break
        while gi < n_grid and grid_list[gi] < te:
            q_rec[gi] = queues
            s_rec[gi] = n_server
            gi += 1
        t = te
        if kind == 0:
            state = jump_states[ji]
            ji += 1
            counts["jump"] += 1
        elif kind == 1:
            _, j = heapq.heappop(heap)
            i = dep_idx[j]
            dep_seen[j][i] = queues[j]
            if queues[j] > 0:
                queues[j] -= 1
                n_server += 1
                counts["departure"] += 1
            else:
                counts["lost"] += 1
            i += 1
            dep_idx[j] = i
            if i < len(dep_lists[j]):
                heapq.heappush(heap, (dep_lists[j][i], j))
        else:
            if ui == _CHUNK:
                uni_buf = rng.random(_CHUNK).tolist()
                ui = 0
            u = uni_buf[ui]
            ui += 1
            cum = cum_routing[state]
            j = 0
            while j < k - 1 and u >= cum[j]:
                j += 1
            queues[j] += 1
            n_server -= 1
            counts["arrival"] += 1
        if events is not None:
            events.append((t, kind, tuple(queues), n_server))
    while gi < n_grid:
        q_rec[gi] = queues
        s_rec[gi] = n_server
        gi += 1
    return Replication(q_rec, s_rec, dep_times, dep_seen, counts, events)


def _worker_count(cfg: SimConfig) -> int:
    if cfg.workers is not None:
        return max(1, int(cfg.workers))
    try:
        return max(1, int(os.environ.get("CLOSEDNET_THREADS", "1")))
    except ValueError:
        return 1


def simulate(env: EnvironmentSpec, path: EnvironmentPath, net: NetworkSpec, cfg: SimConfig) -> SimulationResult:
    """Run ``cfg.replications`` independent replications along ``path``.

    Replication i uses a seed derived from ``(cfg.seed, i)``, so results do
    not depend on how replications are spread over worker processes.
    """
    if cfg.sample_grid is None:
        n = int(round(path.horizon / 1e-3))
        grid = np.linspace(0.0, path.horizon, n + 1)
    else:
        grid = np.asarray(cfg.sample_grid, dtype=float)
        if grid.size and (grid[0] < 0 or grid[-1] > path.horizon + 1e-12):
            raise ValueError("sample grid must lie within [0, horizon]")
    seeds = [replication_seed(cfg.seed, i) for i in range(cfg.replications)]
    args = [(env, path, net, cfg.N, grid, s, cfg.record_events) for s in seeds]
    workers = min(_worker_count(cfg), cfg.replications)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(_run_replication_args, args))
    else:
        reps = [_run_replication(*a) for a in args]
    return SimulationResult(cfg.N, grid, reps, seeds)


def _run_replication_args(args):
    return _run_replication(*args)


def normalized_paths(result: SimulationResult, N: Optional[int] = None) -> np.ndarray:
    """``Q_j(t) / N`` as a (reps, len(grid), k) array."""
    return result.queues / float(N if N is not None else result.N)


@dataclass(frozen=True)
class IdleEstimate:
    estimate: float
    stderr: float
    samples: int


def estimate_idle_probability(result: SimulationResult, station: int, t: float, window: float = 0.0) -> IdleEstimate:
    """Fraction of departure points of ``station`` that find its queue empty.

    With ``window == 0`` each replication contributes the last point at or
    before ``t``; a positive window pools every point in ``[t - window, t]``.
    The standard error is the binomial one and ignores correlation between
    pooled points.
    """
    hits = 0
    total = 0
    for rep in result.replications:
        times = rep.departure_times[station]
        seen = rep.departure_seen[station]
        hi = int(np.searchsorted(times, t, side="right"))
        if hi == 0:
            continue
        lo = hi - 1 if window <= 0 else int(np.searchsorted(times, t - window, side="left"))
        lo = min(lo, hi - 1)
        block = seen[lo:hi]
        hits += int(np.count_nonzero(block == 0))
        total += block.size
    if total == 0:
        raise NoDeparturesBefore(f"no departure point of station {station} at or before t={t}")
    p = hits / total
    return IdleEstimate(p, math.sqrt(p * (1 - p) / total), total)
