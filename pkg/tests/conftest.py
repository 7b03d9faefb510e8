import numpy as np
import pytest

from magflow.config import build_space, load_config
from magflow.geometry import BaseManifold, BlockMagnetic, ConstantMetric, TwistedPhaseSpace


def flat_t2(B=1.0):
    return TwistedPhaseSpace(BaseManifold.torus(2), ConstantMetric(np.eye(2)), BlockMagnetic((B,)), f"flat B={B}")


@pytest.fixture
def flat():
    return flat_t2(1.0)


@pytest.fixture(scope="session")
def perturbed():
    return build_space(load_config("perturbed_t2"))


@pytest.fixture(scope="session")
def kahler():
    return build_space(load_config("t4_kahler"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion.

    The criterion number is taken from the test name (``test_criterion_<n>_...``);
    a test that errors before recording is reported as FAIL.
    """
    number = int(request.node.name.split("_")[2])

    def record(ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    yield record
    _ACCEPTANCE.setdefault(number, f"criterion {number}: FAIL  raised before a result was recorded")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
