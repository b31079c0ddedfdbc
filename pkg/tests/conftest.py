import numpy as np
import pytest

from iqpphase import _pykernels

BACKENDS = [pytest.param(_pykernels, id="python")]
try:
    from iqpphase import _ckernels

    BACKENDS.append(pytest.param(_ckernels, id="cython"))
except ImportError:  # extension not built
    BACKENDS.append(pytest.param(None, id="cython", marks=pytest.mark.skip("extension not built")))


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
