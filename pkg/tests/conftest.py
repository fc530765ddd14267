import os

import numpy as np
import pytest

from twosided.descriptor import DISTRIBUTED, DescriptorSchema

# filled by test_acceptance; printed once at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid_schema():
    return DescriptorSchema((("A", 2), ("B", 3)), DISTRIBUTED)


@pytest.fixture
def pure_python(monkeypatch):
    monkeypatch.setenv("TWOSIDED_PURE_PYTHON", "1")
    yield
    os.environ.pop("TWOSIDED_PURE_PYTHON", None)
