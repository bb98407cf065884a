import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qsmass import build_grid

settings.register_profile(
    "qsmass",
    deadline=None,
    derandomize=True,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("qsmass")

_CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; shown in the terminal summary."""
    lines = request.config.stash[_CRITERIA]

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def axi():
    return build_grid("axisymmetric", 64)


@pytest.fixture
def axi4():
    return build_grid("axisymmetric", 64, n=4)


@pytest.fixture
def full():
    return build_grid("full2d", 16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
