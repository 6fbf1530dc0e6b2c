import numpy as np
import pytest

from gbsval.gaussian import SqueezingSpec, haar_unitary, output_state


def random_complex_symmetric(rng, n, scale=0.5):
    M = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (M + M.T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_spec():
    return SqueezingSpec(3, 3, 0.4)


@pytest.fixture(scope="session")
def small_itf():
    return haar_unitary(3, 7)


@pytest.fixture(scope="session")
def small_state(small_spec, small_itf):
    return output_state(small_spec, small_itf)


# acceptance criteria record one line each; printed after the run
ACCEPTANCE: dict[str, str] = {}


def record(criterion: str, passed: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}"
    print(ACCEPTANCE[criterion])
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE[key])
