import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cuniform.config import ExperimentConfig  # noqa: E402
from cuniform.dynamics import DubinsCar, RandomWalker  # noqa: E402
from cuniform.gridspace import GridSpec  # noqa: E402
from cuniform.uniformflow import precompute  # noqa: E402

WALKER_GRID = GridSpec(delta=(1.0,), lower=(-30.5,), upper=(30.5,), angular=(False,))


def walker_config_doc(N=10):
    return {
        "model": {"kind": "walker", "control_lower": [-1.0], "control_upper": [1.0], "n_actions": 3},
        "grid": {"delta": [1.0], "lower": [-30.5], "upper": [30.5], "angular": [False]},
        "horizon": {"T": float(N), "dt": 1.0},
        "coverage": {"T": float(N)},
        "precompute": {"x0": [0.0], "n_samples": 1},
    }


@pytest.fixture(scope="session")
def dubins_cfg():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def dubins_policy(dubins_cfg):
    c = dubins_cfg
    return precompute(c.model, c.grid, c.x0, c.actions, c.N, c.dt)


@pytest.fixture(scope="session")
def walker_policy():
    w = RandomWalker()
    return precompute(w, WALKER_GRID, [0.0], w.action_grid(3), 10, 1.0)


@pytest.fixture(scope="session")
def small_dubins_policy():
    """A 1 s Dubins policy on a coarse grid, cheap enough for closed-loop unit tests."""
    d = DubinsCar()
    g = GridSpec(delta=(0.2, 0.2, 2 * np.pi / 18), lower=(-10, -10, 0), upper=(10, 10, 2 * np.pi),
                 angular=(False, False, True))
    return precompute(d, g, [0, 0, 0], d.action_grid(11), 5, 0.2)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
