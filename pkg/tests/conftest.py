import numpy as np
import pytest

from rdmultilevel.problems import benchmark_hierarchy


@pytest.fixture(scope="session")
def cube2():
    return benchmark_hierarchy("cube3d", 2)


@pytest.fixture(scope="session")
def square3():
    return benchmark_hierarchy("square2d", 3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(pytestconfig):
    return pytestconfig.stash.setdefault(ACCEPTANCE_LINES, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
