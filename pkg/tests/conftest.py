import numpy as np
import pytest


def random_orthogonal(gen: np.random.Generator, p: int) -> np.ndarray:
    q, r = np.linalg.qr(gen.standard_normal((p, p)))
    return q * np.sign(np.diag(r))


def random_spd(gen: np.random.Generator, p: int, dof: int | None = None) -> np.ndarray:
    x = gen.standard_normal((dof or p + 3, p))
    return x.T @ x


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line)
