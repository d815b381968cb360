"""Fluid limits, simulation and reliability of closed client/server networks
in a semi-Markov environment."""

from .analysis import compare_strategies, convergence_report, exceedance_time, sup_distance
from .des import SimConfig, estimate_idle_probability, simulate
from .fluid import classify, skorokhod_reflect, solve_constant_env, solve_semi_markov
from .model import (
    EnvironmentPath,
    EnvironmentSpec,
    HoldingLaw,
    NetworkSpec,
    check_monotone,
    sample_environment_path,
    state_at,
    validate_spec,
)
from .reliability import Lifetime, ReliabilitySpec, solve_confidence

__version__ = "0.1.0"

__all__ = [
    "EnvironmentPath",
    "EnvironmentSpec",
    "HoldingLaw",
    "Lifetime",
    "NetworkSpec",
    "ReliabilitySpec",
    "SimConfig",
    "check_monotone",
    "classify",
    "compare_strategies",
    "convergence_report",
    "estimate_idle_probability",
    "exceedance_time",
    "sample_environment_path",
    "simulate",
    "skorokhod_reflect",
    "solve_confidence",
    "solve_constant_env",
    "solve_semi_markov",
    "state_at",
    "sup_distance",
    "validate_spec",
]
