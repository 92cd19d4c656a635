import numpy as np
import pytest

from cutnitsche import (CircleLevelSet, LineLevelSet, build_space, build_structured_mesh, classify_cells,
                        cut_quadrature)
from cutnitsche.mesh import Box

ACCEPTANCE_KEY = pytest.StashKey[dict]()


class Setup:
    """Mesh, classification, quadrature and space of one configuration."""

    def __init__(self, n, box, ls, k):
        self.mesh = build_structured_mesh(n, box)
        self.ls = ls
        self.cl = classify_cells(self.mesh, ls)
        self.quad = cut_quadrature(self.mesh, self.cl, ls, 2 * k, 2 * k + 1)
        self.space = build_space(self.mesh, self.cl, k)


def make_setup(n=8, k=1, r0=0.5, box=Box.square(-1.0, 1.0), ls=None):
    return Setup(n, box, ls or CircleLevelSet((0.0, 0.0), r0), k)


@pytest.fixture(scope="session")
def circle_p1():
    return make_setup(8, 1)


@pytest.fixture(scope="session")
def circle_p2():
    return make_setup(8, 2)


@pytest.fixture(scope="session")
def line_p1():
    return make_setup(6, 1, box=Box.square(0.0, 1.0), ls=LineLevelSet.vertical(0.5 + 1e-3 * np.sqrt(2)))


@pytest.fixture
def acceptance_log(request):
    return request.config.stash.setdefault(ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(ACCEPTANCE_KEY, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(log):
        terminalreporter.write_line(log[num])
