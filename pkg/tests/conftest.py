import numpy as np
import pytest

from nsbgk.domain import build_phase_grid

_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line; printed in the terminal summary."""
    def _report(number, passed, detail):
        _ACCEPTANCE_LINES.append((number, passed, detail))
    return _report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    def key(item):
        label = str(item[0])
        digits = "".join(ch for ch in label if ch.isdigit())
        return int(digits), label
    for label, passed, detail in sorted(_ACCEPTANCE_LINES, key=key):
        terminalreporter.write_line(f"criterion {label:>3}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def grid1():
    return build_phase_grid(1, 1.0, 16, 8.0, 64)


@pytest.fixture
def grid64():
    return build_phase_grid(1, 1.0, 64, 8.0, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
