import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from edgefrl.agent import ActionSpaceSpec, AgentNetwork  # noqa: E402
from edgefrl.sim import DeviceProfile  # noqa: E402

SPACE = ActionSpaceSpec((1, 2, 4), (1, 2, 4, 8, 16), (1, 2, 4))


@pytest.fixture
def spec():
    return SPACE


@pytest.fixture
def device():
    return DeviceProfile("agx", 0.010, 0.004, 0.02, 0.01, cores=4, max_threads=8, max_batch=16,
                         queue_capacity=64)


@pytest.fixture
def net(spec):
    return AgentNetwork.initialize(spec, np.random.default_rng(0))


def random_states(rng, n):
    return rng.uniform(0.0, 1.0, size=(n, 8))


def pytest_terminal_summary(terminalreporter):
    from checks import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
