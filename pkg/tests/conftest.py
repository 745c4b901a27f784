import numpy as np
import pytest

from ensemblectl import builtin_example, kernels


@pytest.fixture(params=kernels.available())
def backend(request):
    """Run a test once per available kernel backend."""
    previous = kernels.backend()
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


@pytest.fixture(scope="session")
def example1():
    return builtin_example("bm-oscillator")


@pytest.fixture(scope="session")
def example3():
    return builtin_example("scalar-tv")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
