from __future__ import annotations

import pytest

from twophase.constitutive import FluidParams


@pytest.fixture
def params() -> FluidParams:
    return FluidParams()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import VERDICTS

    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[number])
