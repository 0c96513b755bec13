"""Echoes the one-line acceptance check results after the run."""

import pytest

_RECORDED: list[str] = []


@pytest.fixture
def record_check():
    """Record a one-line result; printed immediately and again in the
    terminal summary so it survives output capture."""

    def _record(line: str) -> None:
        _RECORDED.append(line)
        print(line)

    return _record


def pytest_terminal_summary(terminalreporter):
    if _RECORDED:
        terminalreporter.section("acceptance checks")
        for line in _RECORDED:
            terminalreporter.write_line(line)
