import sys

import numpy as np
import pytest

from shiftscan import backend

# both kernel builds are exercised by default; numba is a hard dependency
BACKENDS = ["numpy", "numba"] if backend.NUMBA_AVAILABLE else ["numpy"]


def pytest_terminal_summary(terminalreporter):
    # emitted after capture teardown so the lines survive any capture mode
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(params=BACKENDS)
def kernel_backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
