"""Command-line entry point: ``closednet <command> --scenario file.json``."""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analysis import StrategyScenario, compare_strategies, convergence_report
from .des import SimConfig, SimulationResult, normalized_paths, simulate
from .errors import ClosedNetError, ScenarioError, ValidationError
from .fluid import MODES, FluidTrajectory, solve_semi_markov
from .model import check_monotone, validate_spec
from .reliability import solve_confidence
from .scenario import Scenario, load_scenario

COMMANDS = ("validate", "fluid", "simulate", "reliability", "compare", "converge")
DEFAULT_STEP = 1e-3


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _grid(t0: float, horizon: float, step: float) -> np.ndarray:
    if not step > 0:
        raise ScenarioError("sample step must be positive")
    n = int(round((horizon - t0) / step))
    grid = t0 + step * np.arange(n + 1)
    grid[-1] = min(grid[-1], horizon)
    return grid


def export_csv(obj, path, sample_step: float = DEFAULT_STEP) -> None:
    """Write a fluid trajectory or simulation result as CSV.

    Fluid: ``t,state,q_1..q_k,frozen_mask`` where bit j of the mask marks
    station j+1 as frozen. Simulation: ``rep,t,q_1..q_k`` with normalized
    queues on the result's own grid (``sample_step`` is ignored).
    """
    buf = io.StringIO()
    if isinstance(obj, FluidTrajectory):
        grid = _grid(obj.t_start, obj.horizon, sample_step)
        q = obj.values(grid)
        states = obj.states(grid)
        frozen = obj.frozen_mask(grid)
        bits = (frozen * (1 << np.arange(obj.k))).sum(axis=1)
        buf.write(",".join(["t", "state"] + [f"q_{j + 1}" for j in range(obj.k)] + ["frozen_mask"]) + "\n")
        for i, t in enumerate(grid):
            row = [_fmt(t), str(int(states[i]))] + [_fmt(v) for v in q[i]] + [str(int(bits[i]))]
            buf.write(",".join(row) + "\n")
    elif isinstance(obj, SimulationResult):
        q = normalized_paths(obj)
        k = q.shape[2]
        buf.write(",".join(["rep", "t"] + [f"q_{j + 1}" for j in range(k)]) + "\n")
        for r in range(q.shape[0]):
            for i, t in enumerate(obj.grid):
                buf.write(",".join([str(r), _fmt(t)] + [_fmt(v) for v in q[r, i]]) + "\n")
    else:
        raise TypeError(f"cannot export {type(obj).__name__}")
    _write(buf.getvalue(), path)


def _write(text: str, path) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


def _write_json(doc: dict, path) -> None:
    _write(json.dumps(doc, indent=2, sort_keys=True) + "\n", path)


def _validated(sc: Scenario):
    env, net = sc.environment(), sc.network()
    checked = validate_spec(env, net)
    return env, net, checked


def _step(args, sc: Scenario) -> float:
    if args.sample_step is not None:
        return args.sample_step
    return float(sc.block("fluid").get("sample_step", DEFAULT_STEP))


def _sim_config(sc: Scenario, seed: int, block: str = "simulate") -> SimConfig:
    doc = sc.block(block)
    step = float(doc.get("grid", DEFAULT_STEP))
    grid = _grid(0.0, sc.horizon, step)
    workers = sc.block("simulate").get("workers")
    return SimConfig(
        int(doc.get("N", 1000)),
        seed=seed,
        sample_grid=grid,
        replications=int(doc.get("replications", 1)),
        workers=None if workers is None else int(workers),
    )


def cmd_validate(args, sc: Scenario) -> None:
    env, net, checked = _validated(sc)
    mono = check_monotone(env)
    _write_json(
        {
            "valid": True,
            "states": env.m,
            "stations": net.k,
            "warnings": [str(w) for w in checked.warnings],
            "monotone": {
                "property1": mono.property1_holds,
                "property2": mono.property2_holds,
                "violations": list(mono.violations),
            },
        },
        args.out,
    )


def cmd_fluid(args, sc: Scenario) -> None:
    env, net, _ = _validated(sc)
    traj = solve_semi_markov(env, sc.path(env, args.seed), net, sc.mode(args.mode))
    export_csv(traj, args.out, _step(args, sc))


def cmd_simulate(args, sc: Scenario) -> None:
    env, net, _ = _validated(sc)
    seed = sc.seed if args.seed is None else args.seed
    result = simulate(env, sc.path(env, seed), net, _sim_config(sc, seed))
    export_csv(result, args.out)


def cmd_reliability(args, sc: Scenario) -> None:
    spec, convention = sc.reliability()
    res = solve_confidence(spec, convention)
    doc = res.as_dict()
    doc.update({"convention": convention, "G": spec.G.as_dict()})
    _write_json(doc, args.out)


def _strategy(sc: Scenario, seed: int, setup: float) -> StrategyScenario:
    env, net, _ = _validated(sc)
    doc = sc.block("compare")
    stations = doc.get("stations")
    return StrategyScenario(
        env,
        net,
        sc.path(env, seed),
        float(setup),
        float(doc.get("unit_cost", 1.0)),
        float(doc.get("level", 0.0)),
        None if stations is None else tuple(int(s) for s in stations),
    )


def cmd_compare(args, sc: Scenario) -> None:
    doc = sc.block("compare")
    seed = sc.seed if args.seed is None else args.seed
    setup = doc.get("setup_cost", [0.0, 0.0])
    if not (isinstance(setup, list) and len(setup) == 2):
        raise ScenarioError("compare.setup_cost must be a pair [X, Y]")
    a = _strategy(sc, seed, setup[0])
    b = _strategy(sc.alternative(), seed, setup[1])
    estimator = doc.get("estimator", "fluid")
    sim = _sim_config(sc, seed) if estimator == "des" else None
    res = compare_strategies(a, b, sc.mode(args.mode), estimator=estimator, sim=sim)
    out = res.as_dict()
    out.update({"estimator": estimator, "mode": sc.mode(args.mode)})
    _write_json(out, args.out)


def cmd_converge(args, sc: Scenario) -> None:
    env, net, _ = _validated(sc)
    seed = sc.seed if args.seed is None else args.seed
    doc = sc.block("converge")
    Ns = [int(n) for n in doc.get("Ns", [100, 1000, 10000])]
    rows = convergence_report(
        env,
        net,
        sc.path(env, seed),
        Ns,
        int(doc.get("replications", 20)),
        seed,
        grid_step=float(doc.get("grid", DEFAULT_STEP)),
        workers=sc.block("simulate").get("workers"),
    )
    _write_json({"seed": seed, "rows": [r.as_dict() for r in rows]}, args.out)


HANDLERS = {
    "validate": cmd_validate,
    "fluid": cmd_fluid,
    "simulate": cmd_simulate,
    "reliability": cmd_reliability,
    "compare": cmd_compare,
    "converge": cmd_converge,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="closednet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, type=Path)
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--mode", choices=MODES, default=None)
        p.add_argument("--seed", type=int, default=None, help="overrides run.seed")
        p.add_argument("--sample-step", type=float, default=None)
    return parser


def _error(exc: Exception, code: str) -> None:
    doc = {"error": code, "message": str(exc)}
    if isinstance(exc, ValidationError):
        doc["violations"] = [v.as_dict() for v in exc.violations]
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Exit codes: 0 success, 1 invalid scenario, 2 runtime or numeric failure."""
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
        HANDLERS[args.command](args, sc)
    except (ValidationError, ScenarioError) as exc:
        _error(exc, exc.code)
        return 1
    except ClosedNetError as exc:
        _error(exc, exc.code)
        return 2
    except (ValueError, ArithmeticError, OSError) as exc:
        _error(exc, type(exc).__name__)
        return 2
    return 0


def main() -> None:
    sys.exit(run())
