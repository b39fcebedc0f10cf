import sys

import numpy as np
import pytest

from securevfl.dataset import VerticalSplit


def make_split(n=8, d_a=1, d_b=2, seed=0) -> VerticalSplit:
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    rng.shuffle(y)
    return VerticalSplit(rng.normal(size=(n, d_a)), rng.normal(size=(n, d_b)), y)


@pytest.fixture
def split():
    return make_split()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
