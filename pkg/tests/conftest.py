import numpy as np
import pytest

from bdfvac.lattice import LatticeSpec, build_lattice


@pytest.fixture(scope="session")
def small_lattice():
    """33 modes, 132 spinor dimensions."""
    return build_lattice(LatticeSpec(4, 1.0, 2.0))


@pytest.fixture(scope="session")
def tiny_lattice():
    """7 modes, 28 spinor dimensions."""
    return build_lattice(LatticeSpec(2, 1.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_CRITERIA = 12
_acceptance_lines = {}


@pytest.fixture
def criterion():
    """Record the verdict of one acceptance criterion and echo it."""

    def record(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
        _acceptance_lines[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, ACCEPTANCE_CRITERIA + 1):
        line = _acceptance_lines.get(number, f"[FAIL] criterion {number:>2}: not evaluated")
        terminalreporter.write_line(line)
