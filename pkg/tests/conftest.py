import numpy as np
import pytest
from hypothesis import settings

from flowmarket.agents import lq_instance
from flowmarket.flownet import FlowNetwork, generate_er

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_lq(seed, n=6, edges=8, cap=(0.0, 2.0), a=(0.0, 5.0), t1=(0.5, 0.6), t2=(18.0, 20.0)):
    rng = np.random.default_rng(seed)
    net = generate_er(n, edges, *cap, seed=rng.integers(2**32))
    return lq_instance(net, rng.uniform(*a, n), rng.uniform(*t1, n), rng.uniform(*t2, n))


@pytest.fixture
def pair_net():
    return FlowNetwork(2, ((0, 1), (1, 0)), [1e6, 1e6])


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
