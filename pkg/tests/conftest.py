import numpy as np
import pytest

from tokentrim.tensor_store import Rng

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return Rng(1234)


def random_rows(rng, shape, low=-1.0, high=1.0):
    return np.asarray(rng.uniform(shape, low, high))
