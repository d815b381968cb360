"""Scenario files: one JSON document driving every command.

Layout::

    {
      "environment": {"states", "transition" | "rates", "holding", "lambda",
                      "routing", "initial_state"},
      "network": {"k", "mu", "beta", "departure_family", "departure_shape"},
      "run": {"horizon", "seed", "mode"},
      "fluid": {"mode", "sample_step"},
      "simulate": {"N", "replications", "grid", "workers"},
      "reliability": {"lambda", "mu", "k", "alpha", "P", "G", "convention"},
      "compare": {"level", "stations", "unit_cost", "setup_cost",
                  "alternative": {"environment": {...}, "network": {...}},
                  "estimator"},
      "converge": {"Ns", "replications", "grid"}
    }

``alternative`` entries override the matching keys of the main scenario to
build the second strategy. Station and state indices are 0-based.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .errors import ScenarioError, ValidationError, Violation
from .fluid import MODES
from .model import EnvironmentPath, EnvironmentSpec, HoldingLaw, NetworkSpec, sample_environment_path
from .reliability import Lifetime, ReliabilitySpec

SCHEMA: dict[str, set[str]] = {
    "environment": {"states", "transition", "rates", "holding", "lambda", "routing", "initial_state"},
    "network": {"k", "mu", "beta", "departure_family", "departure_shape"},
    "run": {"horizon", "seed", "mode"},
    "fluid": {"mode", "sample_step"},
    "simulate": {"N", "replications", "grid", "workers"},
    "reliability": {"lambda", "mu", "k", "alpha", "P", "G", "convention"},
    "compare": {"level", "stations", "unit_cost", "setup_cost", "alternative", "estimator"},
    "converge": {"Ns", "replications", "grid"},
}
HOLDING_KEYS = {"kind", "value", "rate", "shape", "scale", "values"}
LIFETIME_KEYS = {"family", "rate", "shape", "scale"}


def _check_keys(block: dict, allowed: set[str], where: str) -> None:
    if not isinstance(block, dict):
        raise ScenarioError(f"{where} must be an object")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ScenarioError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ScenarioError(f"missing key {where}.{key}")
    return block[key]


def parse_holding(doc: dict, where: str) -> HoldingLaw:
    _check_keys(doc, HOLDING_KEYS, where)
    kind = _require(doc, "kind", where)
    if kind == "deterministic":
        return HoldingLaw.deterministic(_require(doc, "value", where))
    if kind == "exponential":
        return HoldingLaw.exponential(_require(doc, "rate", where))
    if kind == "erlang":
        return HoldingLaw.erlang(_require(doc, "shape", where), _require(doc, "rate", where))
    if kind == "weibull":
        return HoldingLaw.weibull(_require(doc, "shape", where), _require(doc, "scale", where))
    if kind == "replay":
        return HoldingLaw.replay(_require(doc, "values", where))
    raise ScenarioError(f"{where}.kind: unknown holding kind {kind!r}")


def parse_lifetime(doc: dict, where: str = "reliability.G") -> Lifetime:
    _check_keys(doc, LIFETIME_KEYS, where)
    family = _require(doc, "family", where)
    if family == "exponential":
        return Lifetime.exponential(_require(doc, "rate", where))
    if family == "erlang":
        return Lifetime.erlang(_require(doc, "shape", where), _require(doc, "rate", where))
    if family == "weibull":
        return Lifetime.weibull(_require(doc, "shape", where), _require(doc, "scale", where))
    raise ScenarioError(f"{where}.family: unknown lifetime family {family!r}")


def _shape_error(exc: ValueError) -> ValidationError:
    return ValidationError([Violation("ShapeMismatch", str(exc))])


def parse_environment(doc: dict) -> EnvironmentSpec:
    _check_keys(doc, SCHEMA["environment"], "environment")
    states = _require(doc, "states", "environment")
    if isinstance(states, int):
        states = [str(i) for i in range(states)]
    if ("transition" in doc) == ("rates" in doc):
        raise ScenarioError("environment needs exactly one of 'transition' or 'rates'")
    holding = doc.get("holding")
    if holding is not None:
        if not isinstance(holding, list):
            raise ScenarioError("environment.holding must be a list")
        holding = [parse_holding(h, f"environment.holding[{i}]") for i, h in enumerate(holding)]
    init = doc.get("initial_state", 0)
    if isinstance(init, str):
        if init not in states:
            raise ScenarioError(f"initial_state {init!r} is not a state name")
        init = list(states).index(init)
    lam = _require(doc, "lambda", "environment")
    routing = _require(doc, "routing", "environment")
    try:
        if "rates" in doc:
            return EnvironmentSpec.markov(states, doc["rates"], lam, routing, int(init), holding)
        if holding is None:
            raise ScenarioError("environment.holding is required with an explicit transition matrix")
        return EnvironmentSpec(states, doc["transition"], tuple(holding), lam, routing, int(init))
    except ValueError as exc:
        raise _shape_error(exc) from exc


def parse_network(doc: dict) -> NetworkSpec:
    _check_keys(doc, SCHEMA["network"], "network")
    try:
        return NetworkSpec(
            int(_require(doc, "k", "network")),
            _require(doc, "mu", "network"),
            _require(doc, "beta", "network"),
            doc.get("departure_family", "exponential"),
            int(doc.get("departure_shape", 2)),
        )
    except ValueError as exc:
        raise _shape_error(exc) from exc


@dataclass
class Scenario:
    raw: dict

    @property
    def run(self) -> dict:
        return self.raw.get("run", {})

    def block(self, name: str) -> dict:
        return self.raw.get(name, {})

    @property
    def seed(self) -> int:
        return int(self.run.get("seed", 0))

    @property
    def horizon(self) -> float:
        return float(_require(self.run, "horizon", "run"))

    def mode(self, override: Optional[str] = None) -> str:
        mode = override or self.block("fluid").get("mode") or self.run.get("mode", "example")
        if mode not in MODES:
            raise ScenarioError(f"mode must be one of {MODES}, got {mode!r}")
        return mode

    def environment(self) -> EnvironmentSpec:
        return parse_environment(_require(self.raw, "environment", "scenario"))

    def network(self) -> NetworkSpec:
        return parse_network(_require(self.raw, "network", "scenario"))

    def path(self, env: EnvironmentSpec, seed: Optional[int] = None) -> EnvironmentPath:
        return sample_environment_path(env, self.seed if seed is None else seed, self.horizon)

    def reliability(self) -> tuple[ReliabilitySpec, str]:
        doc = _require(self.raw, "reliability", "scenario")
        try:
            spec = ReliabilitySpec(
                float(_require(doc, "lambda", "reliability")),
                float(_require(doc, "mu", "reliability")),
                int(_require(doc, "k", "reliability")),
                float(_require(doc, "alpha", "reliability")),
                float(_require(doc, "P", "reliability")),
                parse_lifetime(_require(doc, "G", "reliability")),
            )
        except ValueError as exc:
            raise ValidationError([Violation("InvalidReliability", str(exc))]) from exc
        return spec, doc.get("convention", "continued")

    def alternative(self) -> "Scenario":
        """Second strategy: the main scenario with ``compare.alternative`` overrides."""
        alt = self.block("compare").get("alternative", {})
        _check_keys(alt, {"environment", "network"}, "compare.alternative")
        raw = copy.deepcopy(self.raw)
        for name, override in alt.items():
            _check_keys(override, SCHEMA[name], f"compare.alternative.{name}")
            raw.setdefault(name, {}).update(copy.deepcopy(override))
        return Scenario(raw)


def parse_scenario(doc: Any) -> Scenario:
    _check_keys(doc, set(SCHEMA), "scenario")
    for name, allowed in SCHEMA.items():
        if name in doc:
            _check_keys(doc[name], allowed, name)
    return Scenario(doc)


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario {path} is not valid JSON: {exc}") from exc
    return parse_scenario(doc)
