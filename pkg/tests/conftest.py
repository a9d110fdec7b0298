import numpy as np
import pytest

from kpstab.spectral import Grid


@pytest.fixture(scope="session")
def grid():
    return Grid(512, 32, 32.0)


@pytest.fixture(scope="session")
def small_grid():
    return Grid(256, 16, 32.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class CriterionLog:
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def __init__(self):
        self.lines = {}

    def record(self, number: int, title: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}  {title}: {detail}"
        self.lines[number] = line
        print(line)


_LOG = CriterionLog()


@pytest.fixture(scope="session")
def criteria():
    return _LOG


def pytest_terminal_summary(terminalreporter):
    if not _LOG.lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_LOG.lines):
        terminalreporter.write_line(_LOG.lines[n])
