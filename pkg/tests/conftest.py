from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from closednet.model import EnvironmentSpec, HoldingLaw, NetworkSpec, sample_environment_path

settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")

# recorded holding times of the four-state example chain E1 -> E2 -> E3 -> E4
FOUR_STATE_HOLDINGS = (0.5488, 1.0892, 1.8734)


def four_state(lam=(2, 4, 6, 6), beta=(0.1, 0.1), family="exponential", horizon=3.0):
    """Four-state birth chain whose first three holdings are replayed; the
    server rate ``lam`` is split evenly between two stations with mu = 2."""
    rates = np.zeros((4, 4))
    rates[0, 1] = rates[1, 2] = rates[2, 3] = 1.0
    holding = [HoldingLaw.replay([h]) for h in FOUR_STATE_HOLDINGS] + [HoldingLaw.exponential(1.0)]
    env = EnvironmentSpec.markov(["E1", "E2", "E3", "E4"], rates, list(lam), [[0.5, 0.5]] * 4, 0, holding=holding)
    net = NetworkSpec(2, [2.0, 2.0], list(beta), family)
    return env, net, sample_environment_path(env, 0, horizon)


def single_bottleneck(horizon=1.0):
    """One environment state, station 1 non-bottleneck (rate 1 vs mu 2),
    station 2 bottleneck (rate 3 vs mu 1), all units start at the server."""
    env = EnvironmentSpec.markov(["E"], [[0.0]], [4.0], [[0.25, 0.75]])
    net = NetworkSpec(2, [2.0, 1.0], [0.0, 0.0])
    return env, net, sample_environment_path(env, 0, horizon)


@pytest.fixture
def four_state_scenario():
    return four_state()


@pytest.fixture
def bottleneck_scenario():
    return single_bottleneck()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
