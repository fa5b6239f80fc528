from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from plds.model import build_curve  # noqa: E402

K1_CORNERS = [(1.0, 2.0), (2.0, 0.0)]
K2_CORNERS = [(1.0, 2.0), (2.0, 0.0), (3.0, 1.0), (4.0, -1.0)]


@pytest.fixture(scope="session")
def curve1():
    return build_curve(K1_CORNERS, 1.0, 2.0)


@pytest.fixture(scope="session")
def curve2():
    return build_curve(K2_CORNERS, 1.0, 2.0)


# one line per acceptance criterion, repeated after the test run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
