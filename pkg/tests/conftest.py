import numpy as np
import pytest

from gsquant.scenarios import diagonal_zero, s1, s2


@pytest.fixture(scope="session")
def S1():
    return s1()


@pytest.fixture(scope="session")
def S2():
    return s2()


@pytest.fixture(scope="session")
def diag():
    return diagonal_zero()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def zero_set_u(action, n, rng):
    """n random moment vectors on the zero set."""
    sl = action.slice
    verts = sl.vertices
    lam = rng.dirichlet(np.ones(len(verts)), size=n)
    return action.u_from_mu(sl.mu(lam @ verts))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
