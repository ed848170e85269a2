import pytest

_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(criterion: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        _LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
