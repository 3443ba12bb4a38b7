import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, p, spread=1.0):
    a = rng.normal(size=(p, p))
    return a @ a.T + spread * np.eye(p)


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
