import pytest

_LINES = []


@pytest.fixture
def verdict():
    """Record and print the single PASS/FAIL line of an acceptance criterion."""

    def emit(number: int, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        print(line)
        _LINES.append((number, line))
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
