import numpy as np
import pytest

from qcorrcomm.tensor_core import DensityOperator, PureState


def haar_state(dims, rng):
    v = rng.normal(size=dims) + 1j * rng.normal(size=dims)
    return PureState(dims, v / np.linalg.norm(v))


def random_density(dims, rng, rank=None):
    D = int(np.prod(dims))
    G = rng.normal(size=(D, rank or D)) + 1j * rng.normal(size=(D, rank or D))
    m = G @ G.conj().T
    return DensityOperator(dims, m / np.trace(m).real)


def random_unitary(n, rng):
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_criteria: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n = mark.args[0]
    if call.when == "call" or call.excinfo is not None:
        failed = call.excinfo is not None or _criteria.get(n) == "FAIL"
        _criteria[n] = "FAIL" if failed else "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        terminalreporter.write_line(f"criterion {n}: {_criteria[n]}")
