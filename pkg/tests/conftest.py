import numpy as np
import pytest

from quantile_kaczmarz import kernels
from quantile_kaczmarz._accel import HAVE_NUMBA

ACCEPTANCE_LOG = []

LOOPS = [pytest.param(kernels.solve_loop_numpy, id="numpy")]
if HAVE_NUMBA:
    LOOPS.append(pytest.param(kernels.solve_loop_numba, id="numba"))


@pytest.fixture(params=LOOPS)
def loop(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LOG:
        terminalreporter.write_line(line)
