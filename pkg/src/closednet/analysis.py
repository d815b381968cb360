"""Trajectory comparison, threshold exceedance and strategy costs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .des import SimConfig, normalized_paths, simulate
from .errors import GridMismatch
from .fluid import ROOT_TOL, FluidSegment, FluidTrajectory, monotone_pieces, solve_semi_markov
from .model import EnvironmentPath, EnvironmentSpec, NetworkSpec

Trajectory = Union[FluidTrajectory, np.ndarray]


def _on_grid(traj: Trajectory, grid: np.ndarray) -> np.ndarray:
    if isinstance(traj, FluidTrajectory):
        if grid.size and (grid[0] < traj.t_start - 1e-12 or grid[-1] > traj.horizon + 1e-12):
            raise GridMismatch(f"grid leaves [{traj.t_start}, {traj.horizon}]")
        return traj.values(grid)
    arr = np.asarray(traj, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] != grid.size:
        raise GridMismatch(f"sampled trajectory has {arr.shape[0]} rows, grid has {grid.size}")
    return arr


def sup_distance(traj_a: Trajectory, traj_b: Trajectory, grid) -> float:
    """max over grid points and stations of |q_a - q_b|."""
    grid = np.asarray(grid, dtype=float)
    a, b = _on_grid(traj_a, grid), _on_grid(traj_b, grid)
    if a.shape != b.shape:
        raise GridMismatch(f"station counts differ: {a.shape[1]} vs {b.shape[1]}")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


# ---------------------------------------------------------------- exceedance


def _roots(A, B, C, D, lo, hi):
    """All sign changes of A + B s + C exp(-D s) on [lo, hi]."""
    f = lambda s: A + B * s + C * math.exp(-D * s)
    cuts = monotone_pieces(B, C, D, lo, hi)
    roots = []
    for u, v in zip(cuts, cuts[1:]):
        fu, fv = f(u), f(v)
        if (fu > 0) == (fv > 0):
            continue
        a, b = u, v
        for _ in range(200):
            if b - a <= ROOT_TOL:
                break
            m = 0.5 * (a + b)
            if (f(m) > 0) == (fu > 0):
                a = m
            else:
                b = m
        roots.append(0.5 * (a + b))
    return roots


def _closed_form_exceedance(seg: FluidSegment, idx: np.ndarray, level: float, t0: float, t1: float) -> Optional[float]:
    live = idx[~seg.frozen[idx]]
    if live.size == 0:
        return 0.0 if level >= 0 else t1 - t0
    rates = np.unique(seg.d[live])
    if rates.size > 1:
        return None
    A = float(seg.a[live].sum()) - level
    B = float(seg.b[live].sum())
    C = float(seg.c[live].sum())
    D = float(rates[0])
    lo, hi = t0 - seg.t_start, t1 - seg.t_start
    pts = [lo] + _roots(A, B, C, D, lo, hi) + [hi]
    total = 0.0
    for u, v in zip(pts, pts[1:]):
        mid = 0.5 * (u + v)
        # values are reflected at zero, so sum of positive parts
        vals = seg.a[live] + seg.b[live] * mid + seg.c[live] * math.exp(-D * mid)
        if np.any(vals < 0):
            return None
        if A + B * mid + C * math.exp(-D * mid) > 0:
            total += v - u
    return total


def _sampled_exceedance(ts: np.ndarray, vals: np.ndarray, level: float) -> float:
    g = vals - level
    total = 0.0
    dt = np.diff(ts)
    g0, g1 = g[:-1], g[1:]
    both = (g0 > 0) & (g1 > 0)
    total += float(dt[both].sum())
    cross = (g0 > 0) != (g1 > 0)
    if np.any(cross):
        frac = g0[cross] / (g0[cross] - g1[cross])
        up = g1[cross] > 0
        total += float(np.sum(np.where(up, (1 - frac) * dt[cross], frac * dt[cross])))
    return total


def exceedance_time(
    traj: FluidTrajectory,
    level: float,
    stations: Optional[Sequence[int]] = None,
    horizon: Optional[float] = None,
    fallback_step: float = 1e-4,
    start: float = 0.0,
) -> float:
    """Lebesgue measure of ``{start <= t <= horizon : sum_{j in stations} q_j(t) > level}``.

    Closed-form segments are solved exactly for their crossings; sampled (ode)
    segments and mixed-rate sums use linear interpolation between samples.
    """
    idx = np.arange(traj.k) if stations is None else np.asarray(stations, dtype=int)
    end = traj.horizon if horizon is None else min(horizon, traj.horizon)
    total = 0.0
    for seg in traj.segments:
        t0, t1 = max(seg.t_start, start), min(seg.t_end, end)
        if t1 <= t0:
            continue
        part = None
        if seg.closed_form:
            part = _closed_form_exceedance(seg, idx, level, t0, t1)
        if part is None:
            if seg.closed_form:
                n = max(2, math.ceil((t1 - t0) / fallback_step) + 1)
                ts = np.linspace(t0, t1, n)
            else:
                ts = seg.times[(seg.times > t0) & (seg.times < t1)]
                ts = np.concatenate([[t0], ts, [t1]])
            vals = seg.values(ts)[:, idx].sum(axis=1)
            part = _sampled_exceedance(ts, vals, level)
        total += part
    return total


# ---------------------------------------------------------------- strategies


@dataclass(frozen=True, eq=False)
class StrategyScenario:
    env: EnvironmentSpec
    net: NetworkSpec
    path: EnvironmentPath
    setup_cost: float
    unit_cost: float
    level: float
    stations: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.setup_cost < 0 or self.unit_cost < 0:
            raise ValueError("costs must be nonnegative")
        if not 0 <= self.level <= 1:
            raise ValueError("level must lie in [0, 1]")


@dataclass(frozen=True)
class StrategyComparison:
    x_a: float
    x_b: float
    total_a: float
    total_b: float
    preferred: str  # "a", "b" or "equivalent"
    stderr_a: float = 0.0
    stderr_b: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def preferred_strategy(total_a: float, total_b: float, tol: float = 1e-12) -> str:
    if abs(total_a - total_b) <= tol * max(1.0, abs(total_a), abs(total_b)):
        return "equivalent"
    return "a" if total_a < total_b else "b"


def _exceedance_des(sc: StrategyScenario, cfg: SimConfig) -> tuple[float, float]:
    result = simulate(sc.env, sc.path, sc.net, cfg)
    q = normalized_paths(result)
    idx = np.arange(sc.net.k) if sc.stations is None else np.asarray(sc.stations)
    per_rep = np.array([_sampled_exceedance(result.grid, rep[:, idx].sum(axis=1), sc.level) for rep in q])
    se = float(per_rep.std(ddof=1) / math.sqrt(per_rep.size)) if per_rep.size > 1 else 0.0
    return float(per_rep.mean()), se


def compare_strategies(
    a: StrategyScenario,
    b: StrategyScenario,
    mode: str = "example",
    estimator: str = "fluid",
    sim: Optional[SimConfig] = None,
) -> StrategyComparison:
    """Total cost ``setup + unit_cost * x`` of each scenario, x being the
    time spent above the level; the cheaper scenario is preferred.

    ``estimator="des"`` replaces the fluid exceedance by the replication mean
    of the simulated one (``sim`` supplies N, seed and replications).
    """
    if estimator == "fluid":
        xa = exceedance_time(solve_semi_markov(a.env, a.path, a.net, mode), a.level, a.stations)
        xb = exceedance_time(solve_semi_markov(b.env, b.path, b.net, mode), b.level, b.stations)
        sa = sb = 0.0
    elif estimator == "des":
        if sim is None:
            raise ValueError("the des estimator needs a SimConfig")
        xa, sa = _exceedance_des(a, sim)
        xb, sb = _exceedance_des(b, sim)
    else:
        raise ValueError("estimator must be 'fluid' or 'des'")
    ta = a.setup_cost + a.unit_cost * xa
    tb = b.setup_cost + b.unit_cost * xb
    return StrategyComparison(xa, xb, ta, tb, preferred_strategy(ta, tb), a.unit_cost * sa, b.unit_cost * sb)


# ---------------------------------------------------------------- convergence


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    median: float
    q25: float
    q75: float
    distances: tuple[float, ...] = field(repr=False, default=())

    def as_dict(self) -> dict:
        return {"N": self.N, "median": self.median, "q25": self.q25, "q75": self.q75}


def convergence_report(
    env: EnvironmentSpec,
    net: NetworkSpec,
    path: EnvironmentPath,
    Ns: Sequence[int],
    reps: int,
    seed: int,
    grid_step: float = 1e-3,
    workers: Optional[int] = None,
) -> list[ConvergenceRow]:
    """Median and quartiles, over replications, of the sup distance between
    ``Q_j / N`` and the ode-mode fluid trajectory, one row per N."""
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ValueError("Ns must be increasing")
    n = int(round(path.horizon / grid_step))
    grid = np.linspace(0.0, path.horizon, n + 1)
    fluid = solve_semi_markov(env, path, net, "ode").values(grid)
    rows = []
    for N in Ns:
        cfg = SimConfig(int(N), seed=seed, sample_grid=grid, replications=reps, workers=workers)
        q = normalized_paths(simulate(env, path, net, cfg))
        d = np.abs(q - fluid[None]).max(axis=(1, 2))
        q25, med, q75 = np.percentile(d, [25, 50, 75])
        rows.append(ConvergenceRow(int(N), float(med), float(q25), float(q75), tuple(float(v) for v in d)))
    return rows
