import numpy as np
import pytest
from hypothesis import settings

from relham import _backend

settings.register_profile("relham", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("relham")

ACCEPTANCE_LINES = []


@pytest.fixture(params=sorted(_backend.BACKENDS))
def backend(request):
    prev = _backend.use(request.param)
    yield request.param
    _backend.use(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
