import numpy as np
import pytest

from mixcausal.dataset import ObservedSample
from mixcausal.simulation import ScenarioSpec, generate

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def strong_sample():
    return generate(ScenarioSpec(overlap="strong", seed=11), 0)


@pytest.fixture(scope="session")
def weak_sample():
    return generate(ScenarioSpec(overlap="weak", seed=11), 0)


@pytest.fixture
def tiny_sample():
    # treated Y={2,4}, control Y={1,3}
    return ObservedSample([2.0, 4.0, 1.0, 3.0], [1, 1, 0, 0], [[0.1], [0.4], [0.2], [0.5]])


def random_sample(n, d, seed, slope=0.5):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    p = 1.0 / (1.0 + np.exp(-(X @ np.full(d, slope) - 0.3)))
    z = (rng.random(n) < p).astype(float)
    y = X.sum(axis=1) + z + rng.standard_normal(n)
    return ObservedSample(y, z, X)
