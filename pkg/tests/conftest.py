import numpy as np
import pytest

from interplab.activations import parse_activation
from interplab.core import Dataset


def random_dataset(seed, d, p, q=1):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((d, p))
    Y = rng.uniform(-1.0, 1.0, (d, q))
    return Dataset(X, Y[:, 0] if q == 1 else Y)


@pytest.fixture
def tanh():
    return parse_activation("tanh")


@pytest.fixture
def relu():
    return parse_activation("relu")


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = {}


def report_criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
