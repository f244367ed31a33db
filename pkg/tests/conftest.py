import warnings

import pytest

from robin_limit.fem import assemble
from robin_limit.geometry import Disk, Rectangle, build_mesh
from robin_limit.torsion import AlphaWindowWarning, FemBackend


@pytest.fixture(scope="session")
def square_sys():
    """Unit square, h ~ 0.05 (1681 nodes)."""
    return assemble(build_mesh(Rectangle(1.0, 1.0), 0.05))


@pytest.fixture(scope="session")
def coarse_square_sys():
    return assemble(build_mesh(Rectangle(1.0, 1.0), 0.1))


@pytest.fixture(scope="session")
def disk_sys():
    return assemble(build_mesh(Disk(1.0), 0.1))


@pytest.fixture
def square_backend(square_sys):
    return FemBackend(square_sys)


@pytest.fixture(autouse=True)
def _quiet_window_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AlphaWindowWarning)
        yield


# one PASS/FAIL line per acceptance criterion, printed after the test session
CRITERIA = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, line = CRITERIA[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {line}")
