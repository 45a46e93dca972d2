import numpy as np
import pytest

from scsmark import shapes


@pytest.fixture(scope="session")
def desk():
    return shapes.desk_meshes()


@pytest.fixture(scope="session")
def small_blob():
    return shapes.deformed_sphere(150, seed=5, bumps=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
