import time

import pytest

from advfilter.classifier import default_classifier, train
from advfilter.core import generate_shape_dataset

# filled by tests/test_acceptance.py, printed once at the end of the run
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def train_data():
    return generate_shape_dataset(100, 32, seed=1)


@pytest.fixture(scope="session")
def test_data():
    return generate_shape_dataset(100, 32, seed=2)


@pytest.fixture(scope="session")
def victim_run(train_data):
    """The default CNN trained on 100 shapes per class; returns (model, seconds)."""
    start = time.perf_counter()
    f = default_classifier((32, 32, 1), 4, seed=1)
    f = train(f, train_data, epochs=20, batch_size=32, learning_rate=0.05, seed=1)
    return f, time.perf_counter() - start


@pytest.fixture(scope="session")
def victim(victim_run):
    return victim_run[0]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
